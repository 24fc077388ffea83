// Loss, Adam optimizer, training loop with validation-accuracy early
// stopping, and macro-averaged evaluation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csiid/autodiff.hpp"
#include "csiid/dataset.hpp"
#include "csiid/model.hpp"

namespace csiid {

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    std::uint64_t seed = 42;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// Mean over the batch of -log softmax(logits)[label] in stable
// log-sum-exp form; differentiable.
inline ad::Tensor cross_entropy_loss(const ad::Tensor& logits,
                                     const std::vector<int>& labels) {
    return ad::cross_entropy(logits, labels);
}

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ad::Parameter>& params, const TrainConfig& cfg);
    // One update from the parameters' accumulated gradients. Throws on a
    // non-finite gradient, naming the offending parameter.
    void step();
    std::size_t steps() const { return t_; }

private:
    std::vector<ad::Parameter>& params_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

struct Batch {
    ad::Tensor amp;    // B x W x K
    ad::Tensor phase;  // B x W x K
    std::vector<int> labels;
};

Batch make_batch(const std::vector<WindowSample>& split,
                 const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end);

// Argmax predictions in eval mode (ties resolve to the lowest class id).
std::vector<int> predict(Classifier& model, const std::vector<WindowSample>& split,
                         std::size_t batch_size = 64);

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;  // per class; 0 when TP+FP = 0
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::size_t total = 0;
};

MetricsReport metrics_from_confusion(
    const std::vector<std::vector<std::size_t>>& confusion);

MetricsReport evaluate_metrics(Classifier& model,
                               const std::vector<WindowSample>& split,
                               std::size_t batch_size = 64);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
};

// Seeded epochs of shuffled batches with Adam steps; validation accuracy in
// eval mode decides early stopping (ties keep the earlier epoch). The model
// is left holding the best-epoch parameters.
TrainResult train_loop(Classifier& model, const WindowedDataset& ds,
                       const TrainConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

// Machine-readable metrics document and the plain-text results table
// (columns: Model, Accuracy, F1, Precision, Recall).
std::string metrics_to_json(const MetricsReport& report, const std::string& model_type,
                            const TrainResult& result, std::uint64_t seed);
std::string metrics_table(const MetricsReport& report, const std::string& model_type);

}  // namespace csiid
