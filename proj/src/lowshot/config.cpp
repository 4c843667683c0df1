#include "lowshot/config.hpp"

#include <set>

#include <json.hpp>

namespace lowshot {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

class Reader {
public:
    explicit Reader(const json& j) : j_(j) {
        if (!j.is_object()) bad("configuration must be a JSON object");
    }

    template <class T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        used_.insert(key);
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            bad(std::string("configuration key '") + key + "' has the wrong type");
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) bad("unknown configuration key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::set<std::string> used_;
};

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        bad(std::string("configuration is not valid JSON: ") + e.what());
    }
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
    const json j = parse_text(text);
    Reader r(j);
    RunConfig c;
    r.get("task", c.task);
    r.get("data_dir", c.data_dir);
    r.get("out_dir", c.out_dir);
    r.get("checkpoint_dir", c.checkpoint_dir);
    r.get("resolution", c.resolution);
    r.get("latent_dim", c.latent_dim);
    r.get("base_channels", c.base_channels);
    r.get("bn_eps", c.bn_eps);
    r.get("ratios", c.ratios);
    r.get("shots", c.shots);
    r.get("losses", c.losses);
    r.get("test_count", c.test_count);
    r.get("seed", c.seed);
    r.get("noise_std", c.noise_std);
    r.get("pretrain_iterations", c.pretrain_iterations);
    r.get("pretrain_lr", c.pretrain_lr);
    r.get("mmd_alpha", c.mmd_alpha);
    r.get("mmd_estimator", c.mmd_estimator);
    r.get("stage1_iterations", c.stage1_iterations);
    r.get("stage1_lr", c.stage1_lr);
    r.get("stage2_iterations", c.stage2_iterations);
    r.get("stage2_lr", c.stage2_lr);
    r.get("restarts", c.restarts);
    r.get("untrained_lr", c.untrained_lr);
    r.get("untrained_momentum", c.untrained_momentum);
    r.get("max_cells", c.max_cells);
    r.get("workers", c.workers);
    r.finish();

    if (c.task != "cs" && c.task != "colorization") bad("task must be cs or colorization");
    if (c.test_count < 1) bad("test_count must be >= 1");
    if (c.noise_std < 0) bad("noise_std must be nonnegative");
    for (const auto& l : c.losses) parse_loss_kind(l);
    if (c.mmd_estimator != "pairwise" && c.mmd_estimator != "unbiased")
        bad("mmd_estimator must be pairwise or unbiased");
    for (double rt : c.ratios)
        if (!(rt > 0) || rt > 1) bad("ratios must lie in (0, 1]");
    for (int s : c.shots)
        if (s < 1) bad("shot counts must be >= 1");
    return c;
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["task"] = c.task;
    j["data_dir"] = c.data_dir;
    j["out_dir"] = c.out_dir;
    j["checkpoint_dir"] = c.checkpoint_dir;
    j["resolution"] = c.resolution;
    j["latent_dim"] = c.latent_dim;
    j["base_channels"] = c.base_channels;
    j["bn_eps"] = c.bn_eps;
    j["ratios"] = c.ratios;
    j["shots"] = c.shots;
    j["losses"] = c.losses;
    j["test_count"] = c.test_count;
    j["seed"] = c.seed;
    j["noise_std"] = c.noise_std;
    j["pretrain_iterations"] = c.pretrain_iterations;
    j["pretrain_lr"] = c.pretrain_lr;
    j["mmd_alpha"] = c.mmd_alpha;
    j["mmd_estimator"] = c.mmd_estimator;
    j["stage1_iterations"] = c.stage1_iterations;
    j["stage1_lr"] = c.stage1_lr;
    j["stage2_iterations"] = c.stage2_iterations;
    j["stage2_lr"] = c.stage2_lr;
    j["restarts"] = c.restarts;
    j["untrained_lr"] = c.untrained_lr;
    j["untrained_momentum"] = c.untrained_momentum;
    j["max_cells"] = c.max_cells;
    j["workers"] = c.workers;
    return j.dump(2);
}

GradCheckConfig parse_gradcheck_json(const std::string& text) {
    const json j = parse_text(text);
    Reader r(j);
    GradCheckConfig c;
    r.get("latent_dim", c.desc.latent_dim);
    r.get("resolution", c.desc.resolution);
    r.get("base_channels", c.desc.base_channels);
    r.get("bn_eps", c.desc.bn_eps);
    r.get("points", c.points);
    r.get("directions", c.directions);
    r.get("sampled_coords", c.sampled_coords);
    r.get("step", c.step);
    r.get("tol", c.tol);
    r.get("shots", c.shots);
    r.get("cs_ratio", c.cs_ratio);
    r.get("seed", c.seed);
    r.finish();
    return c;
}

std::string gradcheck_report_json(const GradCheckReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) {
        cases.push_back({{"objective", c.objective},
                         {"point", c.point},
                         {"max_rel_err", c.max_rel_err},
                         {"pass", c.pass}});
    }
    json j{{"pass", report.pass}, {"max_rel_err", report.max_rel_err}, {"cases", cases}};
    return j.dump(2);
}

DecoderDesc config_desc(const RunConfig& c) {
    DecoderDesc d;
    d.latent_dim = c.latent_dim;
    d.resolution = c.resolution;
    d.out_channels = 3;
    d.base_channels = c.base_channels;
    d.bn_eps = c.bn_eps;
    validate(d);
    return d;
}

InversionConfig config_inversion(const RunConfig& c, std::uint64_t seed) {
    InversionConfig ic;
    ic.stage1_iterations = c.stage1_iterations;
    ic.stage1_lr = c.stage1_lr;
    ic.stage2_iterations = c.stage2_iterations;
    ic.stage2_lr = c.stage2_lr;
    ic.restarts = c.restarts;
    ic.seed = seed;
    validate(ic);
    return ic;
}

}  // namespace lowshot
