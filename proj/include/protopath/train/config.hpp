#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/fusion/fusion.hpp"
#include "protopath/model/model.hpp"

namespace protopath::train {

/// Training hyperparameters. Shared defaults follow the published
/// configuration; the per-cohort choices (dropout, heads, lr) default to the
/// setting most cohorts used.
struct TrainConfig {
    std::size_t d = 128;
    std::size_t K = 16;
    double tau = 0.1;
    std::size_t gnn_layers = 3;
    std::size_t heads_gene = 4;
    std::size_t heads_fusion = 2;
    double dropout = 0.25;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    std::size_t max_epochs = 100;
    std::size_t B = 4;
    std::uint64_t seed = 42;
    std::size_t batch = 1;
    fusion::FusionVariant fusion_variant = fusion::FusionVariant::CrossAttention;
    model::Branches branches = model::Branches::Both;

    // Protocol plumbing.
    std::size_t folds = 5;
    double kmeans_budget = 1e5;
    std::size_t kmeans_restarts = 10;

    /// Throws ConfigError naming the first field outside its domain.
    void validate() const {
        auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
        if (d < 1) fail("d", "must be >= 1");
        if (K < 1) fail("K", "must be >= 1");
        if (!(tau > 0.0)) fail("tau", "must be positive");
        if (gnn_layers < 2) fail("gnn_layers", "must be >= 2");
        if (heads_gene != 2 && heads_gene != 4) fail("heads_gene", "must be 2 or 4");
        if (heads_fusion != 2 && heads_fusion != 4) fail("heads_fusion", "must be 2 or 4");
        if (d % heads_fusion != 0) fail("heads_fusion", "must divide d");
        if (dropout != 0.25 && dropout != 0.5) fail("dropout", "must be 0.25 or 0.5");
        if (lr != 1e-4 && lr != 2e-4) fail("lr", "must be 1e-4 or 2e-4");
        if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
        if (max_epochs < 1) fail("max_epochs", "must be >= 1");
        if (B < 2) fail("B", "must be >= 2");
        if (batch != 1) fail("batch", "only batch size 1 is supported");
        if (folds < 2) fail("folds", "must be >= 2");
        if (!(kmeans_budget >= 1.0)) fail("kmeans_budget", "must be >= 1");
        if (kmeans_restarts < 1) fail("kmeans_restarts", "must be >= 1");
    }

    model::ModelConfig model_config(std::size_t input_dim) const {
        model::ModelConfig m;
        m.input_dim = input_dim;
        m.num_prototypes = K;
        m.dim = d;
        m.temperature = tau;
        m.gnn_layers = gnn_layers;
        m.heads_gene = heads_gene;
        m.heads_fusion = heads_fusion;
        m.dropout = dropout;
        m.bins = B;
        m.variant = fusion_variant;
        m.branches = branches;
        return m;
    }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
    return v;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field numeric(T TrainConfig::*member, const char* key) {
    return {[member, key](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); },
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

/// Keys in documentation order.
inline const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> f = {
        {"d", numeric(&TrainConfig::d, "d")},
        {"K", numeric(&TrainConfig::K, "K")},
        {"tau", numeric(&TrainConfig::tau, "tau")},
        {"gnn_layers", numeric(&TrainConfig::gnn_layers, "gnn_layers")},
        {"heads_gene", numeric(&TrainConfig::heads_gene, "heads_gene")},
        {"heads_fusion", numeric(&TrainConfig::heads_fusion, "heads_fusion")},
        {"dropout", numeric(&TrainConfig::dropout, "dropout")},
        {"lr", numeric(&TrainConfig::lr, "lr")},
        {"weight_decay", numeric(&TrainConfig::weight_decay, "weight_decay")},
        {"max_epochs", numeric(&TrainConfig::max_epochs, "max_epochs")},
        {"B", numeric(&TrainConfig::B, "B")},
        {"seed", numeric(&TrainConfig::seed, "seed")},
        {"batch", numeric(&TrainConfig::batch, "batch")},
        {"fusion_variant",
         {[](TrainConfig& c, const std::string& v) { c.fusion_variant = fusion::parse_fusion_variant(v); },
          [](const TrainConfig& c) { return std::string(fusion::to_string(c.fusion_variant)); }}},
        {"branches",
         {[](TrainConfig& c, const std::string& v) { c.branches = model::parse_branches(v); },
          [](const TrainConfig& c) { return std::string(model::to_string(c.branches)); }}},
        {"folds", numeric(&TrainConfig::folds, "folds")},
        {"kmeans_budget", numeric(&TrainConfig::kmeans_budget, "kmeans_budget")},
        {"kmeans_restarts", numeric(&TrainConfig::kmeans_restarts, "kmeans_restarts")},
    };
    return f;
}

} // namespace detail

inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
    for (const auto& [k, f] : detail::fields())
        if (k == key) return f.set(c, value);
    throw ConfigError("unknown config key '" + key + "'");
}

/// Flat "key = value" text; '#' starts a comment. Later keys override earlier ones.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    base.validate();
    return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), base);
}

inline std::string format_config(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, f] : detail::fields()) out += k + " = " + f.get(c) + "\n";
    return out;
}

inline nlohmann::ordered_json config_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    for (const auto& [k, f] : detail::fields()) j[k] = f.get(c);
    return j;
}

inline TrainConfig config_from_json(const nlohmann::ordered_json& j) {
    TrainConfig c;
    for (const auto& [k, v] : j.items()) set_config_value(c, k, v.get<std::string>());
    c.validate();
    return c;
}

} // namespace protopath::train
