#include "csiid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace csiid {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw InputError("train lr must be positive");
    if (batch == 0 || max_epochs == 0 || patience == 0)
        throw InputError("train batch, max_epochs, and patience must be positive");
    if (patience > max_epochs)
        throw InputError("train patience must not exceed max_epochs");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0))
        throw InputError("adam betas must be in (0, 1)");
}

AdamOptimizer::AdamOptimizer(std::vector<ad::Parameter>& params, const TrainConfig& cfg)
    : params_(params),
      lr_(cfg.lr),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& theta = params_[pi].tensor.values();
        const auto& g = params_[pi].tensor.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("non-finite gradient in parameter " +
                                         params_[pi].name);
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

Batch make_batch(const std::vector<WindowSample>& split,
                 const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
    if (begin >= end || end > order.size())
        throw ShapeError("make_batch: bad range");
    const WindowSample& first = split[order[begin]];
    const std::size_t b = end - begin;
    const std::size_t w = first.amplitude.rows();
    const std::size_t k = first.amplitude.cols();

    std::vector<double> amp(b * w * k), ph(b * w * k);
    Batch out;
    out.labels.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        const WindowSample& s = split[order[begin + i]];
        std::copy(s.amplitude.data().begin(), s.amplitude.data().end(),
                  amp.begin() + i * w * k);
        std::copy(s.phase.data().begin(), s.phase.data().end(), ph.begin() + i * w * k);
        out.labels.push_back(s.label);
    }
    out.amp = ad::Tensor::from_values({b, w, k}, std::move(amp));
    out.phase = ad::Tensor::from_values({b, w, k}, std::move(ph));
    return out;
}

std::vector<int> predict(Classifier& model, const std::vector<WindowSample>& split,
                         std::size_t batch_size) {
    ad::NoGradGuard no_grad;
    Rng unused(0);
    std::vector<std::size_t> order(split.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> out;
    out.reserve(split.size());
    for (std::size_t begin = 0; begin < split.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, split.size());
        const Batch batch = make_batch(split, order, begin, end);
        const ad::Tensor logits = model.forward(batch.amp, batch.phase, false, unused);
        const std::size_t n = logits.dim(1);
        for (std::size_t r = 0; r < logits.dim(0); ++r) {
            const double* row = logits.values().data() + r * n;
            std::size_t best = 0;
            for (std::size_t c = 1; c < n; ++c)
                if (row[c] > row[best]) best = c;
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

MetricsReport metrics_from_confusion(
    const std::vector<std::vector<std::size_t>>& confusion) {
    const std::size_t n = confusion.size();
    MetricsReport rep;
    rep.confusion = confusion;
    rep.precision.assign(n, 0.0);
    rep.recall.assign(n, 0.0);
    rep.f1.assign(n, 0.0);

    std::size_t trace = 0;
    std::vector<std::size_t> row_sum(n, 0), col_sum(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        if (confusion[r].size() != n) throw ShapeError("confusion matrix not square");
        for (std::size_t c = 0; c < n; ++c) {
            rep.total += confusion[r][c];
            row_sum[r] += confusion[r][c];
            col_sum[c] += confusion[r][c];
        }
        trace += confusion[r][r];
    }
    rep.accuracy = rep.total ? static_cast<double>(trace) / static_cast<double>(rep.total)
                             : 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double tp = static_cast<double>(confusion[c][c]);
        rep.precision[c] = col_sum[c] ? tp / static_cast<double>(col_sum[c]) : 0.0;
        rep.recall[c] = row_sum[c] ? tp / static_cast<double>(row_sum[c]) : 0.0;
        const double pr = rep.precision[c] + rep.recall[c];
        rep.f1[c] = pr > 0.0 ? 2.0 * rep.precision[c] * rep.recall[c] / pr : 0.0;
        rep.macro_precision += rep.precision[c];
        rep.macro_recall += rep.recall[c];
        rep.macro_f1 += rep.f1[c];
    }
    if (n) {
        rep.macro_precision /= static_cast<double>(n);
        rep.macro_recall /= static_cast<double>(n);
        rep.macro_f1 /= static_cast<double>(n);
    }
    return rep;
}

MetricsReport evaluate_metrics(Classifier& model,
                               const std::vector<WindowSample>& split,
                               std::size_t batch_size) {
    if (split.empty()) throw InputError("evaluate_metrics: empty split");
    const std::size_t n = model.config().classes;
    std::vector<std::vector<std::size_t>> confusion(n,
                                                    std::vector<std::size_t>(n, 0));
    const std::vector<int> preds = predict(model, split, batch_size);
    for (std::size_t i = 0; i < split.size(); ++i)
        ++confusion[static_cast<std::size_t>(split[i].label)]
                   [static_cast<std::size_t>(preds[i])];
    return metrics_from_confusion(confusion);
}

namespace {

std::vector<std::vector<double>> snapshot_params(std::vector<ad::Parameter>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.tensor.values());
    return out;
}

void restore_params(std::vector<ad::Parameter>& params,
                    const std::vector<std::vector<double>>& snapshot) {
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i].tensor.values() = snapshot[i];
}

}  // namespace

TrainResult train_loop(Classifier& model, const WindowedDataset& ds,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (ds.train.empty() || ds.val.empty())
        throw InputError("train_loop: train and val splits must be nonempty");

    auto& params = model.parameters();
    AdamOptimizer opt(params, cfg);
    Rng base(cfg.seed);
    Rng shuffle_rng = base.fork(0x5f75ff1e);
    Rng dropout_rng = base.fork(0xd20704);

    TrainResult result;
    std::vector<std::vector<double>> best = snapshot_params(params);

    std::vector<std::size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const std::size_t end = std::min(begin + cfg.batch, order.size());
            const Batch batch = make_batch(ds.train, order, begin, end);
            const ad::Tensor logits =
                model.forward(batch.amp, batch.phase, true, dropout_rng);
            const ad::Tensor loss = cross_entropy_loss(logits, batch.labels);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                const auto& lv = logits.values();
                const auto [lo, hi] = std::minmax_element(lv.begin(), lv.end());
                throw std::runtime_error(
                    "train_loop: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch starting " + std::to_string(begin) + " (size " +
                    std::to_string(end - begin) + ", logit range [" +
                    std::to_string(*lo) + ", " + std::to_string(*hi) + "])");
            }
            ad::zero_grads(params);
            ad::backward(loss);
            opt.step();
            loss_sum += loss_value * static_cast<double>(end - begin);
        }
        const double train_loss = loss_sum / static_cast<double>(order.size());

        const std::vector<int> preds = predict(model, ds.val);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < ds.val.size(); ++i)
            if (preds[i] == ds.val[i].label) ++correct;
        const double val_acc =
            static_cast<double>(correct) / static_cast<double>(ds.val.size());

        result.history.push_back({epoch, train_loss, val_acc});
        result.epochs_run = epoch;
        if (val_acc > result.best_val_accuracy || result.best_epoch == 0) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            best = snapshot_params(params);
        }
        if (epoch - result.best_epoch >= cfg.patience) break;
    }
    restore_params(params, best);
    return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write history: " + path);
    out << "epoch,train_loss,val_acc\n";
    char buf[128];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", rec.epoch, rec.train_loss,
                      rec.val_accuracy);
        out << buf;
    }
}

std::string metrics_to_json(const MetricsReport& report, const std::string& model_type,
                            const TrainResult& result, std::uint64_t seed) {
    nlohmann::json j;
    j["model"] = model_type;
    j["accuracy"] = report.accuracy;
    j["macro_f1"] = report.macro_f1;
    j["macro_precision"] = report.macro_precision;
    j["macro_recall"] = report.macro_recall;
    j["confusion"] = report.confusion;
    j["epochs_run"] = result.epochs_run;
    j["best_epoch"] = result.best_epoch;
    j["seed"] = seed;
    return j.dump(2);
}

std::string metrics_table(const MetricsReport& report, const std::string& model_type) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-14s %-10s %-10s %-11s %-10s\n", "Model",
                  "Accuracy", "F1", "Precision", "Recall");
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-14s %-10.2f %-10.2f %-11.2f %-10.2f\n",
                  model_type.c_str(), 100.0 * report.accuracy, 100.0 * report.macro_f1,
                  100.0 * report.macro_precision, 100.0 * report.macro_recall);
    os << buf;
    return os.str();
}

}  // namespace csiid
