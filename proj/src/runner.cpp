#include "coalflow/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "coalflow/report.hpp"
#include "coalflow/rng.hpp"

namespace coalflow::runner {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& what) {
    throw ConfigError("config field '" + field + "': " + what);
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown field '" + it.key() + "' in " + context);
    }
}

long long require_int(const json& j, const std::string& field, long long lo, long long hi) {
    if (!j.contains(field)) bad(field, "missing");
    const auto& v = j[field];
    if (!v.is_number_integer()) bad(field, "must be an integer");
    auto x = v.get<long long>();
    if (x < lo || x > hi) bad(field, "out of range");
    return x;
}

double require_num(const json& j, const std::string& field) {
    if (!j.contains(field)) bad(field, "missing");
    if (!j[field].is_number()) bad(field, "must be a number");
    return j[field].get<double>();
}

std::vector<double> require_num_array(const json& j, const std::string& field) {
    if (!j.contains(field) || !j[field].is_array() || j[field].empty()) bad(field, "must be a nonempty array");
    std::vector<double> out;
    for (const auto& v : j[field]) {
        if (!v.is_number()) bad(field, "entries must be numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

walk1d::StepDistribution parse_step(const json& j, const std::string& field) {
    if (!j.contains(field)) return walk1d::StepDistribution::lazy();
    const auto& s = j[field];
    try {
        if (s.is_string()) {
            if (s.get<std::string>() == "lazy") return walk1d::StepDistribution::lazy();
            bad(field, "unknown step distribution '" + s.get<std::string>() + "'");
        }
        if (s.is_object()) {
            check_keys(s, {"two_point", "steps", "probs"}, "'" + field + "'");
            if (s.contains("two_point")) return walk1d::StepDistribution::two_point(s["two_point"].get<double>());
            if (s.contains("steps") != s.contains("probs")) bad(field, "table needs both steps and probs");
            return walk1d::StepDistribution::table(s["steps"].get<std::vector<int>>(),
                                                   s["probs"].get<std::vector<double>>());
        }
    } catch (const std::invalid_argument& e) {
        bad(field, e.what());
    }
    bad(field, "must be \"lazy\", {\"two_point\":p} or a step table");
}

gasket::TriPrism parse_prism(const json& p, const std::string& context, bool with_times) {
    if (with_times)
        check_keys(p, {"k", "z", "s", "t"}, context);
    else
        check_keys(p, {"k", "z"}, context);
    gasket::TriPrism out;
    out.k = static_cast<int>(require_int(p, "k", -30, 30));
    if (!p.contains("z") || !p["z"].is_array() || p["z"].size() != 2) bad("z", "must be [p, q] in " + context);
    out.zp = p["z"][0].get<std::int64_t>();
    out.zq = p["z"][1].get<std::int64_t>();
    if (with_times) {
        out.s = require_num(p, "s");
        out.t = require_num(p, "t");
        if (!(out.s < out.t)) bad("s", "prism needs s < t in " + context);
    } else {
        out.s = 0.0;
        out.t = 1.0;
    }
    return out;
}

}  // namespace

estimate::Tube tube_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("tube must be an object");
    if (j.contains("prisms")) {
        check_keys(j, {"dim", "prisms", "id"}, "tri tube");
        estimate::TriTube t;
        if (j.contains("dim") && j["dim"].get<int>() != 2) bad("dim", "tri tubes are 2-dimensional");
        for (const auto& p : j["prisms"]) t.prisms.push_back(parse_prism(p, "tube prism", true));
        if (t.prisms.empty()) bad("prisms", "must be nonempty");
        if (j.contains("id")) t.id = j["id"].get<std::string>();
        return t;
    }
    check_keys(j, {"dim", "pieces", "t0", "t1", "id"}, "tube");
    try {
        return geom::tube_from_json_text(j.dump());
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid tube: ") + e.what());
    }
}

json tube_to_json(const estimate::Tube& t) {
    if (const auto* box = std::get_if<geom::PolyTube>(&t)) return json::parse(geom::tube_to_json_text(*box));
    const auto& tri = std::get<estimate::TriTube>(t);
    json j;
    j["dim"] = 2;
    j["prisms"] = json::array();
    for (const auto& p : tri.prisms) j["prisms"].push_back({{"k", p.k}, {"z", {p.zp, p.zq}}, {"s", p.s}, {"t", p.t}});
    if (!tri.id.empty()) j["id"] = tri.id;
    return j;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

const std::vector<std::string> kCommonKeys = {"schema_version", "study",   "model", "samples",
                                              "seed",           "threads", "out",   "guards"};

std::vector<std::string> study_keys(const std::string& study, const std::string& model) {
    std::vector<std::string> keys = kCommonKeys;
    auto add = [&](std::initializer_list<const char*> more) {
        for (const char* k : more) keys.emplace_back(k);
    };
    if (study == "single") add({"tubes"});
    else if (study == "n_ladder") add({"tubes", "n_values"});
    else if (study == "eta_ladder") {
        if (model == "gasket") add({"tubes", "levels", "reference_level", "extent", "horizon", "start_region"});
        else add({"tubes", "eta_values", "region", "start_time", "horizon", "step", "bm_dt", "bm_starts"});
        return keys;  // model parameters are study-owned here
    } else if (study == "enlargement") add({"tubes", "deltas"});
    else if (study == "killed_tail") { add({"K", "n_values", "delta", "step"}); return keys; }
    else if (study == "pair_tail") { add({"x", "y", "t_values", "step"}); return keys; }
    else if (study == "msd") { add({"level", "extent", "walks", "t_min", "t_max", "points", "collapse"}); return keys; }

    if (model == "walk1d") add({"eta", "sigma2", "step", "starts", "horizon", "kill"});
    else if (model == "bm1d") add({"dt", "starts", "horizon"});
    else if (model == "gasket") add({"n", "m", "starts", "horizon"});
    return keys;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const Overrides& ov) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig cfg;

    if (j.contains("schema_version")) {
        const auto& v = j["schema_version"];
        bool ok = (v.is_string() && v.get<std::string>() == kSchemaVersion) ||
                  (v.is_number_integer() && v.get<int>() == 1);
        if (!ok) bad("schema_version", "unsupported (current is \"1\")");
    }
    if (!j.contains("study") || !j["study"].is_string()) bad("study", "missing or not a string");
    cfg.study = j["study"].get<std::string>();
    static const std::vector<std::string> studies = {"single",      "n_ladder",  "eta_ladder", "enlargement",
                                                     "killed_tail", "pair_tail", "msd"};
    if (std::find(studies.begin(), studies.end(), cfg.study) == studies.end())
        bad("study", "unknown study '" + cfg.study + "'");

    if (j.contains("model")) {
        if (!j["model"].is_string()) bad("model", "must be a string");
        cfg.model = j["model"].get<std::string>();
    } else if (cfg.study == "killed_tail" || cfg.study == "pair_tail") {
        cfg.model = "walk1d";
    } else if (cfg.study == "msd") {
        cfg.model = "gasket";
    } else if (cfg.study == "eta_ladder") {
        cfg.model = "walk1d";
    } else {
        bad("model", "missing");
    }
    if (cfg.model != "walk1d" && cfg.model != "bm1d" && cfg.model != "gasket")
        bad("model", "unknown model '" + cfg.model + "'");

    check_keys(j, study_keys(cfg.study, cfg.model), "config");

    if (j.contains("samples")) cfg.samples = require_int(j, "samples", 1, 1000000000);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() && !j["seed"].is_number_unsigned()) bad("seed", "must be an integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("threads")) cfg.threads = static_cast<int>(require_int(j, "threads", 0, 4096));
    if (j.contains("out")) {
        if (!j["out"].is_string()) bad("out", "must be a string");
        cfg.out_dir = j["out"].get<std::string>();
    }
    if (j.contains("guards")) {
        const auto& g = j["guards"];
        check_keys(g, {"max_work", "max_triangles"}, "'guards'");
        if (g.contains("max_work")) cfg.max_work = g["max_work"].get<double>();
        if (g.contains("max_triangles")) cfg.max_triangles = g["max_triangles"].get<std::int64_t>();
    }

    if (ov.samples) {
        if (*ov.samples < 1) bad("samples", "must be >= 1");
        cfg.samples = *ov.samples;
    }
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.threads) cfg.threads = *ov.threads;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    cfg.raw = ov.raw;

    cfg.raw_config = j;
    cfg.effective = j;
    cfg.effective["schema_version"] = kSchemaVersion;
    cfg.effective["study"] = cfg.study;
    cfg.effective["model"] = cfg.model;
    cfg.effective["samples"] = cfg.samples;
    cfg.effective["seed"] = cfg.seed;
    cfg.effective["threads"] = cfg.threads;
    cfg.effective["out"] = cfg.out_dir;
    return cfg;
}

// ---------------------------------------------------------------------------
// Study drivers

namespace {

void guard_work(const ExperimentConfig& cfg, double work) {
    if (work > cfg.max_work)
        throw GuardError("resource guard: estimated work " + std::to_string(work) + " exceeds max_work " +
                         std::to_string(cfg.max_work));
}

std::vector<estimate::Tube> parse_tubes(const json& j) {
    if (!j.contains("tubes") || !j["tubes"].is_array() || j["tubes"].empty()) bad("tubes", "must be a nonempty array");
    std::vector<estimate::Tube> tubes;
    for (const auto& t : j["tubes"]) tubes.push_back(tube_from_json(t));
    return tubes;
}

estimate::ModelSpec build_model(const ExperimentConfig& cfg) {
    const json& j = cfg.raw_config;
    estimate::ModelSpec model;
    try {
        if (cfg.model == "walk1d") {
            model.kind = estimate::ModelKind::walk1d;
            model.walk.eta = require_num(j, "eta");
            model.walk.step = parse_step(j, "step");
            model.walk.horizon = require_num(j, "horizon");
            if (j.contains("sigma2") && std::abs(j["sigma2"].get<double>() - model.walk.step.sigma2) > 1e-12)
                bad("sigma2", "does not match the step distribution variance");
            if (j.contains("kill") && !j["kill"].is_null()) {
                auto iv = require_num_array(j, "kill");
                if (iv.size() != 2) bad("kill", "must be [lo, hi] or null");
                model.walk.kill = {{iv[0], iv[1]}};
            }
            for (const auto& z : require_num_array(j, "starts")) (void)z;  // type check only
            if (!j["starts"].is_array()) bad("starts", "must be an array of [x, t]");
            for (const auto& z : j["starts"]) {
                if (!z.is_array() || z.size() != 2) bad("starts", "entries must be [x, t]");
                model.starts.push_back({z[0].get<double>(), z[1].get<double>()});
            }
        } else if (cfg.model == "bm1d") {
            model.kind = estimate::ModelKind::bm1d;
            model.bm_dt = require_num(j, "dt");
            model.bm_horizon = require_num(j, "horizon");
            if (!j.contains("starts") || !j["starts"].is_array()) bad("starts", "must be an array of [x, t]");
            for (const auto& z : j["starts"]) {
                if (!z.is_array() || z.size() != 2) bad("starts", "entries must be [x, t]");
                model.starts.push_back({z[0].get<double>(), z[1].get<double>()});
            }
        } else {
            model.kind = estimate::ModelKind::gasket;
            model.g_level = static_cast<int>(require_int(j, "n", 0, 20));
            model.g_extent = j.contains("m") ? static_cast<int>(require_int(j, "m", 0, 20)) : 0;
            model.g_horizon = require_num(j, "horizon");
            model.graph = std::make_shared<gasket::GasketGraph>(
                gasket::GasketGraph::build(model.g_level, model.g_extent, cfg.max_triangles));
            if (!j.contains("starts") || !j["starts"].is_array()) bad("starts", "must be an array of [p, q, t]");
            double dt = model.graph->time_step();
            for (const auto& z : j["starts"]) {
                if (!z.is_array() || z.size() != 3) bad("starts", "entries must be [p, q, t]");
                auto v = model.graph->find(z[0].get<std::int64_t>(), z[1].get<std::int64_t>());
                if (!v) bad("starts", "(" + z[0].dump() + "," + z[1].dump() + ") is not a gasket vertex");
                double t = z[2].get<double>();
                auto tick = std::llround(t / dt);
                if (std::abs(tick * dt - t) > 1e-9 * std::max(1.0, std::abs(t))) bad("starts", "time off the 5^-n grid");
                model.g_starts.push_back({*v, tick});
            }
        }
        model.prepare();
    } catch (const std::length_error& e) {
        throw GuardError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return model;
}

double model_work(const estimate::ModelSpec& m) {
    switch (m.kind) {
        case estimate::ModelKind::walk1d:
            return static_cast<double>(m.starts.size()) * (m.walk.horizon / m.walk.time_step());
        case estimate::ModelKind::bm1d:
            return static_cast<double>(m.starts.size()) * (m.bm_horizon / m.bm_dt);
        case estimate::ModelKind::gasket:
            return static_cast<double>(m.g_starts.size()) * (m.g_horizon / m.graph->time_step());
    }
    return 0.0;
}

json base_report(const ExperimentConfig& cfg) {
    json rep;
    rep["schema_version"] = kSchemaVersion;
    rep["study"] = cfg.study;
    rep["model"] = cfg.model;
    rep["config"] = cfg.effective;
    rep["samples"] = cfg.samples;
    rep["seed"] = cfg.seed;
    rep["monotone_flag"] = true;
    rep["tubes"] = json::array();
    rep["ladder"] = json::array();
    rep["p_hat"] = json::array();
    rep["stderr"] = json::array();
    return rep;
}

void fill_rungs(json& rep, const estimate::ConvergenceReport& conv) {
    rep["ladder"] = conv.ladder;
    json p = json::array(), se = json::array(), lo = json::array(), hi = json::array();
    for (const auto& e : conv.estimates) {
        p.push_back(e.p_hat);
        se.push_back(e.std_error);
        lo.push_back(e.ci_lo);
        hi.push_back(e.ci_hi);
    }
    rep["p_hat"] = p;
    rep["stderr"] = se;
    rep["ci_lo"] = lo;
    rep["ci_hi"] = hi;
    rep["monotone_flag"] = conv.monotone_flag;
    rep["ci_overlap"] = conv.ci_overlap;
}

std::string raw_estimate_lines(const estimate::ModelSpec& model, std::span<const estimate::Tube> tubes,
                               const ExperimentConfig& cfg) {
    std::ostringstream out;
    for (long long r = 0; r < cfg.samples; ++r) {
        auto rs = estimate::replica_seed(cfg.seed, static_cast<std::uint64_t>(r));
        CoalescingSystem sys = estimate::simulate(model, rs);
        json line;
        line["replica"] = r;
        line["stream"] = rs;
        json ind = json::array();
        for (const auto& t : tubes) ind.push_back(estimate::tube_crossed(model, sys, t));
        line["indicators"] = ind;
        out << line.dump() << "\n";
    }
    return out.str();
}

// --- killed_tail ------------------------------------------------------------

RunResult run_killed_tail(const ExperimentConfig& cfg) {
    const json& j = cfg.raw_config;
    double K = j.contains("K") ? require_num(j, "K") : 1.0;
    double delta = require_num(j, "delta");
    if (!(delta > 0.0)) bad("delta", "must be positive");
    auto step = parse_step(j, "step");
    std::vector<long long> n_values;
    if (!j.contains("n_values")) bad("n_values", "missing");
    for (const auto& v : j["n_values"]) n_values.push_back(v.get<long long>());
    if (n_values.empty()) bad("n_values", "must be nonempty");

    double work = 0.0;
    for (auto n : n_values) work += (2.0 * K * static_cast<double>(n) + 1) * std::ceil(delta * static_cast<double>(n) * static_cast<double>(n));
    guard_work(cfg, work * static_cast<double>(cfg.samples));

    auto t_begin = std::chrono::steady_clock::now();
    std::vector<std::vector<std::int64_t>> counts(n_values.size());  // per rung, per replica U
    std::ostringstream raw;
    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
        counts[ni].resize(static_cast<std::size_t>(cfg.samples));
        auto n = static_cast<int>(n_values[ni]);
        for (long long r = 0; r < cfg.samples; ++r) {
            auto rs = estimate::replica_seed(cfg.seed, static_cast<std::uint64_t>(r) * 131 + static_cast<std::uint64_t>(ni));
            auto kc = walk1d::killed_survivor_count(K, n, delta, step, rs);
            counts[ni][static_cast<std::size_t>(r)] = kc.survivors;
            if (cfg.raw) raw << json{{"replica", r}, {"n", n}, {"stream", rs}, {"U", kc.survivors}}.dump() << "\n";
        }
    }

    std::int64_t k_max = 1;
    for (const auto& c : counts)
        for (auto u : c) k_max = std::max(k_max, u);
    auto tail = [&](std::size_t ni, std::int64_t k) {
        std::int64_t cnt = 0;
        for (auto u : counts[ni])
            if (u >= k) ++cnt;
        return static_cast<double>(cnt) / static_cast<double>(cfg.samples);
    };

    // C_hat fitted on the first rung: max over k of k * delta * P(U >= k)
    double c_hat = 0.0;
    for (std::int64_t k = 1; k <= k_max; ++k) c_hat = std::max(c_hat, static_cast<double>(k) * delta * tail(0, k));

    json rep = base_report(cfg);
    json ks = json::array(), bound = json::array();
    json tails = json::object();
    for (std::int64_t k = 1; k <= k_max; ++k) {
        ks.push_back(k);
        bound.push_back(c_hat / (delta * static_cast<double>(k)));
    }
    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
        json col = json::array();
        for (std::int64_t k = 1; k <= k_max; ++k) col.push_back(tail(ni, k));
        tails[std::to_string(n_values[ni])] = col;
    }
    rep["ladder"] = ks;
    json p = json::array(), se = json::array();
    for (std::int64_t k = 1; k <= k_max; ++k) {
        double ph = tail(n_values.size() - 1, k);
        p.push_back(ph);
        se.push_back(std::sqrt(ph * (1 - ph) / static_cast<double>(cfg.samples)));
    }
    rep["p_hat"] = p;
    rep["stderr"] = se;
    rep["bound"] = bound;
    rep["c_hat"] = c_hat;
    rep["n_values"] = n_values;
    rep["K"] = K;
    rep["delta"] = delta;
    rep["tails"] = tails;
    rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    RunResult res;
    res.report = std::move(rep);
    res.raw_lines = raw.str();
    std::ostringstream s;
    s << "killed_tail K=" << K << " delta=" << delta << " c_hat=" << c_hat << " k_max=" << k_max;
    res.summary = s.str();
    return res;
}

// --- pair_tail ---------------------------------------------------------------

RunResult run_pair_tail(const ExperimentConfig& cfg) {
    const json& j = cfg.raw_config;
    auto x = require_int(j, "x", -1000000, 1000000);
    auto y = require_int(j, "y", -1000000, 1000000);
    auto step = parse_step(j, "step");
    std::vector<std::int64_t> ts;
    if (!j.contains("t_values")) bad("t_values", "missing");
    for (const auto& v : j["t_values"]) {
        auto t = v.get<std::int64_t>();
        if (t < 0) bad("t_values", "must be nonnegative");
        ts.push_back(t);
    }
    if (ts.empty()) bad("t_values", "must be nonempty");
    std::sort(ts.begin(), ts.end());
    guard_work(cfg, 2.0 * static_cast<double>(ts.back()) * static_cast<double>(cfg.samples));

    auto t_begin = std::chrono::steady_clock::now();
    std::vector<std::int64_t> taus;
    auto tails = walk1d::pair_meeting_tail(x, y, ts, static_cast<int>(cfg.samples), step, cfg.seed,
                                           cfg.raw ? &taus : nullptr);

    json rep = base_report(cfg);
    rep["ladder"] = ts;
    json p = json::array(), se = json::array(), norm = json::array();
    double dist = std::abs(static_cast<double>(x - y));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        p.push_back(tails[i]);
        se.push_back(std::sqrt(tails[i] * (1 - tails[i]) / static_cast<double>(cfg.samples)));
        norm.push_back(dist > 0 ? tails[i] * std::sqrt(static_cast<double>(ts[i])) / dist : 0.0);
    }
    rep["p_hat"] = p;
    rep["stderr"] = se;
    rep["normalized"] = norm;
    rep["x"] = x;
    rep["y"] = y;
    rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    RunResult res;
    res.report = std::move(rep);
    if (cfg.raw) {
        std::ostringstream raw;
        for (std::size_t r = 0; r < taus.size(); ++r)
            raw << json{{"replica", r}, {"tau", taus[r]}}.dump() << "\n";
        res.raw_lines = raw.str();
    }
    std::ostringstream s;
    s << "pair_tail x=" << x << " y=" << y << " tail(" << ts.back() << ")=" << tails.back();
    res.summary = s.str();
    return res;
}

// --- msd ----------------------------------------------------------------------

RunResult run_msd(const ExperimentConfig& cfg) {
    const json& j = cfg.raw_config;
    int level = static_cast<int>(require_int(j, "level", 1, 12));
    int extent = j.contains("extent") ? static_cast<int>(require_int(j, "extent", 0, 12)) : 2;
    int walks = j.contains("walks") ? static_cast<int>(require_int(j, "walks", 1, 100000000)) : 10000;
    auto t_min = j.contains("t_min") ? require_int(j, "t_min", 1, 100000000) : 10;
    auto t_max = j.contains("t_max") ? require_int(j, "t_max", 1, 1000000000) : 10000;
    int points = j.contains("points") ? static_cast<int>(require_int(j, "points", 2, 200)) : 9;
    bool collapse = j.contains("collapse") && j["collapse"].get<bool>();
    if (t_min >= t_max) bad("t_min", "must be below t_max");
    guard_work(cfg, static_cast<double>(walks) * static_cast<double>(t_max) * (collapse ? 2.0 : 1.0));

    auto t_begin = std::chrono::steady_clock::now();
    std::vector<std::int64_t> ticks;
    for (int i = 0; i < points; ++i) {
        double lt = std::log(static_cast<double>(t_min)) +
                    (std::log(static_cast<double>(t_max)) - std::log(static_cast<double>(t_min))) * i / (points - 1);
        auto t = static_cast<std::int64_t>(std::llround(std::exp(lt)));
        if (ticks.empty() || t > ticks.back()) ticks.push_back(t);
    }

    auto run_level = [&](int lv) {
        auto g = gasket::GasketGraph::build(lv, extent, cfg.max_triangles);
        std::int64_t side = g.side();
        auto start = g.find(side / 4, side / 4);
        if (!start) throw ConfigError("msd: no interior start vertex (extent too small)");
        return gasket::mean_squared_displacement(g, *start, ticks, walks, cfg.seed);
    };
    std::vector<double> msd = run_level(level);

    // log-log least squares slope
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    auto npts = static_cast<double>(ticks.size());
    auto gref = gasket::GasketGraph::build(level, 0, cfg.max_triangles);
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        double lx = std::log(static_cast<double>(ticks[i]) * gref.time_step());
        double ly = std::log(msd[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);

    json rep = base_report(cfg);
    json ladder = json::array(), marr = json::array();
    for (std::size_t i = 0; i < ticks.size(); ++i) {
        ladder.push_back(static_cast<double>(ticks[i]) * gref.time_step());
        marr.push_back(msd[i]);
    }
    rep["ladder"] = ladder;
    rep["msd"] = marr;
    rep["slope"] = slope;
    rep["level"] = level;
    rep["walks"] = walks;

    if (collapse) {
        std::vector<double> fine = run_level(level + 1);
        double worst = 0.0;
        json dev = json::array();
        for (std::size_t i = 0; i < ticks.size(); ++i) {
            double rel = std::abs(4.0 * fine[i] - msd[i]) / msd[i];
            dev.push_back(rel);
            worst = std::max(worst, rel);
        }
        rep["collapse_rel_dev"] = dev;
        rep["collapse_max_rel_dev"] = worst;
    }
    rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    RunResult res;
    res.report = std::move(rep);
    std::ostringstream s;
    s << "msd level=" << level << " slope=" << slope;
    res.summary = s.str();
    return res;
}

// --- estimate-backed studies ----------------------------------------------------

RunResult run_estimate_study(const ExperimentConfig& cfg) {
    const json& j = cfg.raw_config;
    auto t_begin = std::chrono::steady_clock::now();
    json rep = base_report(cfg);
    RunResult res;

    if (cfg.study == "eta_ladder" && cfg.model == "gasket") {
        estimate::GasketLadderSpec spec;
        if (!j.contains("levels")) bad("levels", "missing");
        for (const auto& v : j["levels"]) spec.levels.push_back(v.get<int>());
        spec.reference_level = static_cast<int>(require_int(j, "reference_level", 0, 12));
        spec.extent = j.contains("extent") ? static_cast<int>(require_int(j, "extent", 0, 12)) : 0;
        spec.horizon = require_num(j, "horizon");
        if (!j.contains("start_region")) bad("start_region", "missing");
        for (const auto& p : j["start_region"]) spec.start_region.push_back(parse_prism(p, "start_region", false));
        auto tubes = parse_tubes(j);
        double work = 0.0;
        for (int lv : spec.levels) work += std::pow(3.0, lv + spec.extent + 1) * spec.horizon * std::pow(5.0, lv);
        guard_work(cfg, work * static_cast<double>(cfg.samples));
        auto out = estimate::gasket_level_ladder_study(spec, tubes, static_cast<int>(cfg.samples), cfg.seed, cfg.threads);
        fill_rungs(rep, out.rungs);
        rep["reference_p_hat"] = out.reference.p_hat;
        rep["reference_stderr"] = out.reference.std_error;
        rep["gap"] = out.gaps;
        for (const auto& t : tubes) rep["tubes"].push_back(estimate::tube_id(t));
        rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        res.report = std::move(rep);
        res.summary = "eta_ladder (gasket levels) final gap " + report::format_double(out.gaps.back());
        return res;
    }

    if (cfg.study == "eta_ladder") {
        estimate::EtaLadderSpec spec;
        spec.eta_values = require_num_array(j, "eta_values");
        auto region = require_num_array(j, "region");
        if (region.size() != 2) bad("region", "must be [lo, hi]");
        spec.region_lo = region[0];
        spec.region_hi = region[1];
        spec.start_time = j.contains("start_time") ? require_num(j, "start_time") : 0.0;
        spec.horizon = require_num(j, "horizon");
        spec.step = parse_step(j, "step");
        if (j.contains("bm_dt")) spec.bm_dt = require_num(j, "bm_dt");
        if (j.contains("bm_starts")) spec.bm_starts = static_cast<int>(require_int(j, "bm_starts", 1, 100000));
        auto tubes = parse_tubes(j);
        double work = spec.bm_starts * spec.horizon / spec.bm_dt;
        for (double eta : spec.eta_values) {
            double sites = (spec.region_hi - spec.region_lo) * std::sqrt(spec.step.sigma2) / eta + 1;
            work += sites * spec.horizon / (eta * eta);
        }
        guard_work(cfg, work * static_cast<double>(cfg.samples));
        auto out = estimate::eta_ladder_study(spec, tubes, static_cast<int>(cfg.samples), cfg.seed, cfg.threads);
        fill_rungs(rep, out.rungs);
        rep["reference_p_hat"] = out.reference.p_hat;
        rep["reference_stderr"] = out.reference.std_error;
        rep["gap"] = out.gaps;
        for (const auto& t : tubes) rep["tubes"].push_back(estimate::tube_id(t));
        rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        res.report = std::move(rep);
        res.summary = "eta_ladder final gap " + report::format_double(out.gaps.back());
        return res;
    }

    estimate::ModelSpec model = build_model(cfg);
    guard_work(cfg, model_work(model) * static_cast<double>(cfg.samples));
    auto tubes = parse_tubes(j);
    for (const auto& t : tubes) rep["tubes"].push_back(estimate::tube_id(t));

    if (cfg.study == "single") {
        auto e = estimate::estimate_joint_crossing(model, tubes, static_cast<int>(cfg.samples), cfg.seed, cfg.threads);
        rep["ladder"] = {1.0};
        rep["p_hat"] = {e.p_hat};
        rep["stderr"] = {e.std_error};
        rep["ci_lo"] = {e.ci_lo};
        rep["ci_hi"] = {e.ci_hi};
        res.summary = "single p_hat=" + report::format_double(e.p_hat) + " +- " + report::format_double(e.std_error);
    } else if (cfg.study == "n_ladder") {
        std::vector<int> n_values;
        if (!j.contains("n_values")) bad("n_values", "missing");
        for (const auto& v : j["n_values"]) n_values.push_back(v.get<int>());
        auto conv = estimate::n_ladder_study(model, tubes, n_values, static_cast<int>(cfg.samples), cfg.seed, cfg.threads);
        fill_rungs(rep, conv);
        res.summary = std::string("n_ladder monotone=") + (conv.monotone_flag ? "yes" : "VIOLATED");
    } else if (cfg.study == "enlargement") {
        auto deltas = require_num_array(j, "deltas");
        if (tubes.size() != 1 || !std::holds_alternative<geom::PolyTube>(tubes[0]))
            bad("tubes", "enlargement needs exactly one box tube");
        auto out = estimate::enlargement_stability(model, std::get<geom::PolyTube>(tubes[0]), deltas,
                                                   static_cast<int>(cfg.samples), cfg.seed, cfg.threads);
        fill_rungs(rep, out.rungs);
        rep["base_p_hat"] = out.base.p_hat;
        rep["base_stderr"] = out.base.std_error;
        rep["gap"] = out.gaps;
        res.summary = "enlargement final gap " + report::format_double(out.gaps.back());
    } else {
        bad("study", "unhandled study");
    }

    if (cfg.raw) res.raw_lines = raw_estimate_lines(model, tubes, cfg);
    rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    res.report = std::move(rep);
    return res;
}

}  // namespace

RunResult run_study(const ExperimentConfig& cfg) {
    try {
        if (cfg.study == "killed_tail") return run_killed_tail(cfg);
        if (cfg.study == "pair_tail") return run_pair_tail(cfg);
        if (cfg.study == "msd") return run_msd(cfg);
        return run_estimate_study(cfg);
    } catch (const std::length_error& e) {
        throw GuardError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

int run_from_file(const std::string& config_path, const Overrides& ov) {
    try {
        json j;
        try {
            j = report::read_json_file(config_path);
        } catch (const std::exception& e) {
            std::cerr << "error: " << config_path << ": " << e.what() << "\n";
            return 2;
        }
        ExperimentConfig cfg;
        try {
            cfg = parse_config(j, ov);
        } catch (const ConfigError& e) {
            std::cerr << "error: " << config_path << ": " << e.what() << "\n";
            return 2;
        }
        RunResult res;
        try {
            res = run_study(cfg);
        } catch (const ConfigError& e) {
            std::cerr << "error: " << config_path << ": " << e.what() << "\n";
            return 2;
        } catch (const GuardError& e) {
            std::cerr << "error: " << config_path << ": " << e.what() << "\n";
            return 3;
        }
        std::filesystem::create_directories(cfg.out_dir);
        auto path = [&](const char* name) { return (std::filesystem::path(cfg.out_dir) / name).string(); };
        report::write_text_file(path("report.json"), res.report.dump(2) + "\n");
        report::write_text_file(path("report.csv"), report::to_csv(res.report));
        if (cfg.raw) report::write_text_file(path("replicas.jsonl"), res.raw_lines);
        std::cout << res.summary << "  -> " << path("report.json") << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace coalflow::runner
