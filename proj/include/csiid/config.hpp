// Flat key-value run configuration with a closed key registry. Precedence:
// built-in defaults < config file < command-line flags. Unknown keys are
// rejected.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csiid/common.hpp"

namespace csiid {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

class RunConfig {
public:
    RunConfig();  // populated with every known key at its default

    static const std::vector<ConfigKey>& registry();

    bool has_key(const std::string& key) const;
    void set(const std::string& key, const std::string& value);  // throws on unknown
    void load_file(const std::string& path);

    std::string get_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;  // true/false/1/0

    // All keys, sorted, as "key=value" lines.
    std::string effective_text() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace csiid
