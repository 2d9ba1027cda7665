#include "pbnn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pbnn::exp {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
    throw std::runtime_error(origin + ": " + what);
}

// pulls a typed value and tracks consumed keys
struct Block {
    Block(const json& node, std::string where) : j(node), path(std::move(where)) {}

    const json& j;
    std::string path;
    mutable std::vector<std::string> seen;

    const json* find(const std::string& key) const {
        if (!j.is_object()) fail(path, "expected an object");
        seen.push_back(key);
        auto it = j.find(key);
        return it == j.end() ? nullptr : &*it;
    }

    template <typename T>
    void get(const std::string& key, T& out) const {
        if (const json* v = find(key)) {
            try {
                out = v->get<T>();
            } catch (const json::exception& e) {
                fail(path, "key '" + key + "': " + e.what());
            }
        }
    }

    void check_consumed() const {
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (const auto& k : seen) {
                if (k == it.key()) { known = true; break; }
            }
            if (!known) fail(path, "unknown key '" + it.key() + "'");
        }
    }
};

void parse_device(const Block& b, device::DeviceParams& d, device::SwitchingCurve& curve) {
    b.get("ra", d.ra);
    b.get("t_sl", d.t_sl_nm);
    b.get("t_ox", d.t_ox_nm);
    b.get("v_h", d.v_h);
    b.get("tmr0", d.tmr0);
    b.get("a", d.a_nm);
    b.get("b", d.b_nm);
    b.get("d", d.d_nm);
    b.get("rho", d.rho);
    b.get("pulse_width_ms", d.pulse_width_ms);
    b.get("rectangular_pillar", d.rectangular_pillar);
    b.get("hm_length", d.hm_length_nm);
    b.get("breakdown_guard_v", d.breakdown_guard_v);
    if (const json* c = b.find("curve")) {
        Block cb{*c, b.path + ".curve"};
        std::vector<std::vector<double>> anchors;
        cb.get("anchors", anchors);
        if (!anchors.empty()) {
            if (anchors.size() != 2 || anchors[0].size() != 2 || anchors[1].size() != 2) {
                fail(cb.path, "anchors must be two [voltage, probability] pairs");
            }
            curve = device::SwitchingCurve::from_anchors({anchors[0][0], anchors[0][1]},
                                                         {anchors[1][0], anchors[1][1]});
        }
        cb.get("p_min", curve.p_min);
        cb.get("p_max", curve.p_max);
        cb.check_consumed();
    }
    b.check_consumed();
}

void parse_array(const Block& b, cim::ArrayConfig& a) {
    b.get("rows", a.rows);
    b.get("cols", a.cols);
    b.get("v_rd_max", a.v_rd_max);
    b.get("transimpedance", a.transimpedance);
    b.get("v_offset", a.v_offset);
    if (const json* n = b.find("noise")) {
        Block nb{*n, b.path + ".noise"};
        nb.get("sigma_conductance", a.noise.sigma_conductance);
        nb.get("sigma_read", a.noise.sigma_read);
        nb.get("sigma_comparator", a.noise.sigma_comparator);
        nb.check_consumed();
    }
    b.check_consumed();
}

net::Architecture parse_arch(const Block& b) {
    std::string preset = "canonical";
    b.get("preset", preset);
    if (const json* layers = b.find("layers")) {
        net::Architecture arch;
        std::vector<int> input{1, 28, 28};
        b.get("input", input);
        if (input.size() != 3) fail(b.path, "input must be [channels, height, width]");
        arch.input = {input[0], input[1], input[2]};
        for (const auto& lj : *layers) {
            Block lb{lj, b.path + ".layers[]"};
            std::string kind;
            lb.get("kind", kind);
            if (kind == "conv") {
                int out_channels = 0, kernel = 0;
                lb.get("out_channels", out_channels);
                lb.get("kernel", kernel);
                arch.layers.push_back(net::LayerSpec::conv(out_channels, kernel));
            } else if (kind == "max_pool") {
                arch.layers.push_back(net::LayerSpec::max_pool());
            } else if (kind == "fully_connected") {
                int in = 0, out = 0;
                lb.get("in", in);
                lb.get("out", out);
                arch.layers.push_back(net::LayerSpec::fully_connected(in, out));
            } else if (kind == "softmax") {
                arch.layers.push_back(net::LayerSpec::softmax());
            } else {
                fail(lb.path, "unknown layer kind '" + kind + "'");
            }
        }
        trace_dims(arch);  // shape check
        b.check_consumed();
        return arch;
    }
    if (preset != "canonical") fail(b.path, "unknown preset '" + preset + "'");
    b.check_consumed();
    return net::Architecture::canonical();
}

void parse_train(const Block& b, train::TrainConfig& t) {
    b.get("epochs", t.epochs);
    b.get("batch_size", t.batch_size);
    b.get("learning_rate", t.learning_rate);
    b.get("lr_decay", t.lr_decay);
    b.get("lr_decay_epoch", t.lr_decay_epoch);
    b.get("adam_beta1", t.adam_beta1);
    b.get("adam_beta2", t.adam_beta2);
    b.get("adam_eps", t.adam_eps);
    b.get("weight_decay", t.weight_decay);
    b.get("ste_clip", t.ste_clip);
    b.get("theta_clip", t.theta_clip);
    b.get("init_spread", t.init_spread);
    b.get("sigma_div_floor", t.sigma_div_floor);
    b.get("sigma_scale", t.sigma_scale);
    b.get("sigma_warmup_epochs", t.sigma_warmup_epochs);
    b.get("variance_gradient", t.variance_gradient);
    b.get("logit_scale", t.logit_scale);
    b.get("quantize_export", t.quantize_export);
    b.get("eval_train_subset", t.eval_train_subset);
    b.get("grad_chunks", t.grad_chunks);
    b.check_consumed();
}

void parse_eval(const Block& b, EvalConfig& e) {
    b.get("cycles", e.cycles);
    b.get("subset", e.subset);
    b.get("checkpoint", e.checkpoint);
    b.get("resample_per_patch", e.resample_per_patch);
    std::string mode = "per-cycle";
    b.get("mode", mode);
    if (mode == "per-cycle") {
        e.mode = net::HardwareMode::PerCycleBits;
    } else if (mode == "prob-prop") {
        e.mode = net::HardwareMode::ProbabilityPropagation;
    } else {
        fail(b.path, "eval mode must be 'per-cycle' or 'prob-prop'");
    }
    b.check_consumed();
}

void parse_sweeps(const Block& b, SweepConfig& s) {
    b.get("variation_grid", s.variation_grid);
    b.get("cycle_grid", s.cycle_grid);
    b.get("variation_trials", s.variation_trials);
    b.get("variation_subset", s.variation_subset);
    b.check_consumed();
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!seed_set) {
        throw std::runtime_error("config: a seed is required (file key 'seed' or --seed); "
                                 "wall-clock seeding is not supported");
    }
    array.validate();
    arch.validate();
    train.validate();
    if (sweeps.variation_grid.empty() || sweeps.cycle_grid.empty()) {
        throw std::runtime_error("config: sweep grids must be non-empty");
    }
    if (eval.cycles < 1) throw std::runtime_error("config: eval.cycles must be >= 1");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(origin, e.what());
    }
    ExperimentConfig cfg;
    Block b{root, origin};
    if (const json* v = b.find("seed")) {
        cfg.seed = v->get<uint64_t>();
        cfg.seed_set = true;
    }
    if (const json* v = b.find("dataset")) {
        Block db{*v, origin + ".dataset"};
        db.get("dir", cfg.dataset_dir);
        db.check_consumed();
    }
    if (const json* v = b.find("output")) {
        Block ob{*v, origin + ".output"};
        ob.get("dir", cfg.output_dir);
        ob.check_consumed();
    }
    if (const json* v = b.find("device")) {
        parse_device({*v, origin + ".device"}, cfg.array.device, cfg.array.curve);
    }
    if (const json* v = b.find("array")) parse_array({*v, origin + ".array"}, cfg.array);
    if (const json* v = b.find("arch")) cfg.arch = parse_arch({*v, origin + ".arch"});
    if (const json* v = b.find("train")) parse_train({*v, origin + ".train"}, cfg.train);
    if (const json* v = b.find("eval")) parse_eval({*v, origin + ".eval"}, cfg.eval);
    if (const json* v = b.find("sweeps")) parse_sweeps({*v, origin + ".sweeps"}, cfg.sweeps);
    if (const json* v = b.find("train_models")) cfg.train_models = v->get<std::vector<std::string>>();
    b.check_consumed();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string canonical_config(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["dataset"]["dir"] = c.dataset_dir;
    j["output"]["dir"] = c.output_dir;
    auto& d = j["device"];
    d["ra"] = c.array.device.ra;
    d["t_sl"] = c.array.device.t_sl_nm;
    d["t_ox"] = c.array.device.t_ox_nm;
    d["v_h"] = c.array.device.v_h;
    d["tmr0"] = c.array.device.tmr0;
    d["a"] = c.array.device.a_nm;
    d["b"] = c.array.device.b_nm;
    d["d"] = c.array.device.d_nm;
    d["rho"] = c.array.device.rho;
    d["pulse_width_ms"] = c.array.device.pulse_width_ms;
    d["rectangular_pillar"] = c.array.device.rectangular_pillar;
    d["curve"]["v0"] = c.array.curve.v0;
    d["curve"]["k"] = c.array.curve.k;
    d["curve"]["p_min"] = c.array.curve.p_min;
    d["curve"]["p_max"] = c.array.curve.p_max;
    auto& a = j["array"];
    a["rows"] = c.array.rows;
    a["cols"] = c.array.cols;
    a["v_rd_max"] = c.array.v_rd_max;
    a["transimpedance"] = c.array.transimpedance;
    a["v_offset"] = c.array.v_offset;
    a["noise"] = {{"sigma_conductance", c.array.noise.sigma_conductance},
                  {"sigma_read", c.array.noise.sigma_read},
                  {"sigma_comparator", c.array.noise.sigma_comparator}};
    auto& t = j["train"];
    t["epochs"] = c.train.epochs;
    t["batch_size"] = c.train.batch_size;
    t["learning_rate"] = c.train.learning_rate;
    t["lr_decay"] = c.train.lr_decay;
    t["lr_decay_epoch"] = c.train.lr_decay_epoch;
    t["weight_decay"] = c.train.weight_decay;
    t["ste_clip"] = c.train.ste_clip;
    t["theta_clip"] = c.train.theta_clip;
    t["init_spread"] = c.train.init_spread;
    t["logit_scale"] = c.train.logit_scale;
    t["sigma_scale"] = c.train.sigma_scale;
    t["sigma_warmup_epochs"] = c.train.sigma_warmup_epochs;
    t["variance_gradient"] = c.train.variance_gradient;
    t["quantize_export"] = c.train.quantize_export;
    auto& e = j["eval"];
    e["cycles"] = c.eval.cycles;
    e["subset"] = c.eval.subset;
    e["mode"] = c.eval.mode == net::HardwareMode::PerCycleBits ? "per-cycle" : "prob-prop";
    e["checkpoint"] = c.eval.checkpoint;
    e["resample_per_patch"] = c.eval.resample_per_patch;
    j["sweeps"] = {{"variation_grid", c.sweeps.variation_grid},
                   {"cycle_grid", c.sweeps.cycle_grid},
                   {"variation_trials", c.sweeps.variation_trials},
                   {"variation_subset", c.sweeps.variation_subset}};
    j["train_models"] = c.train_models;
    std::vector<json> layers;
    for (const auto& l : c.arch.layers) {
        json lj;
        lj["kind"] = static_cast<int>(l.kind);
        lj["out_channels"] = l.out_channels;
        lj["kernel"] = l.kernel;
        lj["in"] = l.in;
        lj["out"] = l.out;
        layers.push_back(lj);
    }
    j["arch"]["layers"] = layers;
    j["arch"]["input"] = {c.arch.input.c, c.arch.input.h, c.arch.input.w};
    return j.dump();
}

uint64_t config_hash(const ExperimentConfig& config) {
    const std::string s = canonical_config(config);
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash_hex(const ExperimentConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    return buf;
}

}  // namespace pbnn::exp
