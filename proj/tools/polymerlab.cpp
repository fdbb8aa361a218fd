#include "cli_config.hpp"

#include "polymerlab/checkpoint.hpp"
#include "polymerlab/env.hpp"
#include "polymerlab/errors.hpp"
#include "polymerlab/estimators.hpp"
#include "polymerlab/exact.hpp"
#include "polymerlab/field.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/spine.hpp"
#include "polymerlab/walk.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#ifndef POLYMERLAB_GIT_REV
#define POLYMERLAB_GIT_REV "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polymer;
using polymer::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitBudget = 4;

std::string num(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string site_cell(const Site& x)
{
    std::string s = "\"(";
    for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? " " : "") + std::to_string(x[i]);
    return s + ")\"";
}

class Csv {
public:
    Csv(const fs::path& path, const std::string& header) : out_(path, std::ios::trunc)
    {
        if (!out_) throw ConfigError("cannot write " + path.string());
        out_ << header << '\n';
    }
    template <class... T>
    void row(const T&... cells)
    {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v)
    {
        return std::to_string(v);
    }

    std::ofstream out_;
};

json record(const std::string& quantity, double value, const std::string& method, double residual, int horizon)
{
    return json{{"quantity", quantity}, {"value", value}, {"method", method}, {"residual", residual},
                {"horizon", horizon}};
}

struct Context {
    std::string sub;
    RunConfig cfg;
    fs::path out;
    int workers = 1;
    std::string resume;
    std::uint64_t stop_after = 0;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    json results = json::array();
    std::vector<std::string> outputs;
    bool complete = true;

    fs::path file(const std::string& name)
    {
        outputs.push_back(name);
        return out / name;
    }
    std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.integer("run.seed", 0, (1LL << 62))); }
    double beta() const { return cfg.nonneg("run.beta"); }
};

EnvModel make_env(const RunConfig& cfg)
{
    const auto& family = cfg.str("env.family");
    if (family == "gaussian") return EnvModel::gaussian();
    if (family == "two_point") return EnvModel::two_point(cfg.real("env.a"), cfg.real("env.b"), cfg.real("env.p"));
    if (family == "uniform") return EnvModel::uniform(cfg.real("env.lo"), cfg.real("env.hi"));
    throw ConfigError("env.family must be gaussian, two_point or uniform, got '" + family + "'");
}

WalkKernel make_walk(const RunConfig& cfg)
{
    const auto& kind = cfg.str("walk.kind");
    const int d = static_cast<int>(cfg.integer("walk.d", 1, kMaxDim));
    const int rmax = static_cast<int>(cfg.integer("walk.rmax", 0, 100000));
    if (kind == "srw") return WalkKernel::simple(d);
    if (kind == "nu1") {
        if (d != 1) throw ConfigError("walk.d must be 1 for walk.kind=nu1");
        return WalkKernel::nu1(rmax);
    }
    if (kind == "nu2") return WalkKernel::nu2(d, rmax);
    throw ConfigError("walk.kind must be srw, nu1 or nu2, got '" + kind + "'");
}

ReplicaRecord one(const std::vector<ReplicaRecord>& v) { return v.at(0); }

// ---------------------------------------------------------------------------
// Checkpointed Monte Carlo sections

struct Section {
    ReplicaSummary header; // seed, horizon, levels, grid times; no records
    ReplicaTask task;
    std::uint64_t count = 0;
};

/// Runs every section to its count, checkpointing to out/checkpoint.bin.
/// Returns false when stopped early (stop-after or run.max_seconds).
bool run_sections(Context& ctx, std::vector<Section>& sections, std::vector<ReplicaSummary>& done)
{
    const std::string tag = ctx.cfg.hash(ctx.sub);
    Checkpoint ck;
    ck.tag = tag;
    if (!ctx.resume.empty()) {
        ck = load_checkpoint(ctx.resume);
        if (ck.tag != tag) {
            throw ConfigError("checkpoint " + ctx.resume + " was written for config hash " + ck.tag +
                              ", the current config hashes to " + tag);
        }
        if (ck.sections.size() != sections.size()) throw ConfigError("checkpoint has the wrong number of sections");
    } else {
        for (const auto& s : sections) ck.sections.push_back(s.header);
    }
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto& h = sections[i].header;
        const auto& c = ck.sections[i];
        if (c.master_seed != h.master_seed || c.horizon != h.horizon || c.levels != h.levels ||
            c.grid_times != h.grid_times) {
            throw ConfigError("checkpoint section " + std::to_string(i) + " does not match the configuration");
        }
    }

    const fs::path path = ctx.out / "checkpoint.bin";
    const double max_seconds = ctx.cfg.nonneg("run.max_seconds");
    std::uint64_t produced = 0;
    bool complete = true;
    for (std::size_t i = 0; i < sections.size() && complete; ++i) {
        const std::uint64_t before = ck.sections[i].records.size();
        RunControl control;
        control.checkpoint_every = static_cast<std::uint64_t>(ctx.cfg.integer("checkpoint.every", 0, 1LL << 40));
        control.checkpoint_seconds = ctx.cfg.nonneg("checkpoint.seconds");
        control.on_checkpoint = [&](const ReplicaSummary& s) {
            ck.sections[i] = s;
            save_checkpoint(ck, path.string());
            return true;
        };
        if (ctx.stop_after) {
            if (produced >= ctx.stop_after) {
                complete = ck.sections[i].records.size() >= sections[i].count;
                if (!complete) break;
                continue;
            }
            control.stop_after = ctx.stop_after - produced;
        }
        if (max_seconds > 0) {
            const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.t0).count();
            control.wall_limit = std::max(1e-9, max_seconds - used);
        }
        ck.sections[i] =
            run_task_replicas(sections[i].task, sections[i].count, ctx.workers, std::move(ck.sections[i]), control);
        produced += ck.sections[i].records.size() - before;
        complete = ck.sections[i].records.size() >= sections[i].count;
    }
    save_checkpoint(ck, path.string());
    ctx.outputs.push_back("checkpoint.bin");
    if (!complete) {
        ctx.complete = false;
        std::uint64_t have = 0;
        std::uint64_t want = 0;
        for (std::size_t i = 0; i < sections.size(); ++i) {
            have += ck.sections[i].records.size();
            want += sections[i].count;
        }
        std::cerr << "stopped after " << have << " of " << want << " replicas; resume with --resume "
                  << path.string() << '\n';
        return false;
    }
    done = std::move(ck.sections);
    return true;
}

ReplicaPlan make_plan(const Context& ctx, int horizon)
{
    ReplicaPlan plan;
    plan.kernel = make_walk(ctx.cfg);
    plan.env = make_env(ctx.cfg);
    plan.beta = ctx.beta();
    plan.horizon = horizon;
    return plan;
}

bool run_plan(Context& ctx, const ReplicaPlan& plan, std::uint64_t count, ReplicaSummary& out)
{
    log_mgf(plan.env, plan.beta); // validates β against the family before any work
    ReplicaSummary header;
    header.master_seed = ctx.seed();
    header.horizon = plan.horizon;
    header.levels = plan.levels;
    header.grid_times = plan.grid_times;
    // a zero-replica run validates the plan
    run_replicas(plan, header.master_seed, 0, 1);
    const std::uint64_t seed = header.master_seed;
    std::vector<Section> sections{{header, [plan, seed](std::uint64_t id) { return run_replica(plan, seed, id); },
                                   count}};
    std::vector<ReplicaSummary> done;
    if (!run_sections(ctx, sections, done)) return false;
    out = std::move(done[0]);
    return true;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_lambda(Context& ctx)
{
    const EnvModel env = make_env(ctx.cfg);
    const double beta = ctx.beta();
    ctx.results.push_back(record("lambda", log_mgf(env, beta), "closed form log E[exp(beta omega)]", 0.0, 0));
    ctx.results.push_back(record("chi", overlap_factor(env, beta), "exp(lambda(2 beta) - 2 lambda(beta))", 0.0, 0));
    return kExitOk;
}

int cmd_beta2(Context& ctx)
{
    const auto r = solve_beta2(make_walk(ctx.cfg), make_env(ctx.cfg), ctx.cfg.real("run.tol"),
                               ctx.cfg.real("run.beta_max"));
    json b = record("beta2", r.beta2, "bisection on chi(beta) pi = 1; verdict " + to_string(r.verdict), r.residual, 0);
    b["verdict"] = to_string(r.verdict);
    ctx.results.push_back(b);
    json p = record("pi", r.pi, "collision probability 1 - 1/G; " + r.collision.method, r.collision.achieved_tol, 0);
    p["green"] = r.collision.green;
    ctx.results.push_back(p);
    return kExitOk;
}

int cmd_evolve(Context& ctx)
{
    if (ctx.cfg.str("field.mode") != "point") {
        throw ConfigError("field.mode=" + ctx.cfg.str("field.mode") + " is not supported by evolve; plane mode runs "
                          "through fluct");
    }
    const auto plan = make_plan(ctx, static_cast<int>(ctx.cfg.integer("run.n", 1, 1000000)));
    log_mgf(plan.env, plan.beta);
    const int n = plan.horizon;
    const int d = plan.kernel.dim();
    const std::uint64_t seed = ctx.seed();
    ReplicaSummary header;
    header.master_seed = seed;
    header.horizon = n;
    std::vector<Section> sections{{header,
                                   [plan, seed, n](std::uint64_t id) {
                                       const std::uint64_t key = replica_key(seed, id);
                                       const EnvironmentStream stream(plan.env,
                                                                      derive_key(key, StreamTag::environment));
                                       PolymerField field = PolymerField::init_point(plan.kernel, plan.env, plan.beta);
                                       ReplicaRecord rec;
                                       rec.id = id;
                                       for (int t = 1; t <= n; ++t) {
                                           field.evolve_step(stream);
                                           Site x;
                                           rec.samples.push_back(field.log_total());
                                           rec.samples.push_back(field.max_endpoint(&x));
                                           for (Eigen::Index i = 0; i < x.size(); ++i) rec.samples.push_back(x[i]);
                                       }
                                       return rec;
                                   },
                                   ctx.cfg.count("run.R")}};
    std::vector<ReplicaSummary> done;
    if (!run_sections(ctx, sections, done)) return kExitOk;

    Csv csv(ctx.file("trajectory.csv"), "replica,n,logW,maxmu,argmax_x");
    std::vector<double> final_w;
    const std::size_t stride = 2 + static_cast<std::size_t>(d);
    for (const auto& r : done[0].records) {
        for (int t = 1; t <= n; ++t) {
            const double* s = &r.samples.at(static_cast<std::size_t>(t - 1) * stride);
            Site x(d);
            for (int i = 0; i < d; ++i) x[i] = static_cast<int>(s[2 + i]);
            csv.row(r.id, t, s[0], s[1], site_cell(x));
        }
        final_w.push_back(std::exp(r.samples[static_cast<std::size_t>(n - 1) * stride]));
    }
    double m = 0.0;
    for (double w : final_w) m += w;
    m /= static_cast<double>(final_w.size());
    double v = 0.0;
    for (double w : final_w) v += (w - m) * (w - m);
    const double se = final_w.size() > 1 ? std::sqrt(v / static_cast<double>(final_w.size() - 1) /
                                                     static_cast<double>(final_w.size()))
                                         : 0.0;
    json j = record("mean_W_n", m, "Monte Carlo mean over replicas; residual = mean - 1", m - 1.0, n);
    j["stderr"] = se;
    ctx.results.push_back(j);
    return kExitOk;
}

int cmd_tail(Context& ctx)
{
    auto plan = make_plan(ctx, static_cast<int>(ctx.cfg.integer("field.nmax", 1, 1000000)));
    if (plan.horizon >= 2) plan.grid_times = {plan.horizon / 2, plan.horizon};
    ReplicaSummary s;
    if (!run_plan(ctx, plan, ctx.cfg.count("run.R"), s)) return kExitOk;

    Csv sup(ctx.file("suprema.csv"), "replica,n_max,log_sup_W,log_sup_point");
    std::vector<double> w;
    std::vector<double> pt;
    for (const auto& r : s.records) {
        sup.row(r.id, plan.horizon, r.log_sup_w, r.log_sup_point);
        w.push_back(std::exp(r.log_sup_w));
        pt.push_back(std::exp(r.log_sup_point));
    }
    const int k = static_cast<int>(ctx.cfg.integer("run.k", 0, 1LL << 30));
    Csv hill(ctx.file("hill.csv"), "target,n_max,k,p_hat,lo,hi");
    Csv surv(ctx.file("survival.csv"), "target,n_max,u,survival");
    std::vector<TailFit> fits;
    for (const auto& [name, samples] : {std::pair{"W", &w}, std::pair{"point", &pt}}) {
        TailFit fit;
        try {
            fit = hill_tail(*samples, k, plan.horizon);
        } catch (const ConfigError& e) {
            json j = record(std::string("tail_exponent_") + name, std::nan(""),
                            std::string("not estimable: ") + e.what(), std::nan(""), plan.horizon);
            ctx.results.push_back(j);
            fits.push_back(fit);
            continue;
        }
        for (const auto& h : fit.sweep) hill.row(name, plan.horizon, h.k, h.p_hat, h.lo, h.hi);
        for (const auto& p : fit.survival) surv.row(name, plan.horizon, p.u, p.survival);
        json j = record(std::string("tail_exponent_") + name, fit.p_hat,
                        "Hill estimator, k = " + std::to_string(fit.k) + "; residual = 95% half-width",
                        0.5 * (fit.hi - fit.lo), plan.horizon);
        j["lo"] = fit.lo;
        j["hi"] = fit.hi;
        j["k"] = fit.k;
        ctx.results.push_back(j);
        fits.push_back(fit);
    }
    const bool overlap = fits[0].k > 0 && fits[1].k > 0 && fits[0].lo <= fits[1].hi && fits[1].lo <= fits[0].hi;
    ctx.results.push_back(record("tail_agreement", overlap ? 1.0 : 0.0,
                                 "1 when the W and point-to-point intervals overlap", 0.0, plan.horizon));

    // horizon sensitivity: the same fit on sup over the first half of the horizon
    if (plan.grid_times.size() == 2) {
        Csv sens(ctx.file("hill_horizon.csv"), "n_max,k,p_hat,lo,hi");
        for (std::size_t g = 0; g < 2; ++g) {
            std::vector<double> v;
            for (const auto& r : s.records) v.push_back(std::exp(r.log_sup_grid[g]));
            try {
                const TailFit fit = hill_tail(v, k, plan.grid_times[g]);
                sens.row(plan.grid_times[g], fit.k, fit.p_hat, fit.lo, fit.hi);
            } catch (const ConfigError&) {
                sens.row(plan.grid_times[g], 0, std::nan(""), std::nan(""), std::nan(""));
            }
        }
    }

    Csv sm(ctx.file("supermult.csv"), "n_max,u,v,zeta_u,zeta_v,zeta_uv,diff,sigma,empty,violation");
    int violations = 0;
    for (const auto& c : supermultiplicativity_check(s, ctx.cfg.reals("tail.u"))) {
        sm.row(plan.horizon, c.u, c.v, c.zeta_u, c.zeta_v, c.zeta_uv, c.diff, c.sigma, int(c.empty), int(c.violation));
        violations += c.violation;
    }
    ctx.results.push_back(record("supermult_violations", violations,
                                 "cells with zeta(uv) - zeta(u) zeta(v) below -3 sigma", 0.0, plan.horizon));
    return kExitOk;
}

int cmd_overshoot(Context& ctx)
{
    auto plan = make_plan(ctx, static_cast<int>(ctx.cfg.integer("field.nmax", 1, 1000000)));
    plan.levels = ctx.cfg.reals("run.A");
    plan.stop_at_top_level = true;
    const double p = ctx.cfg.real("run.p");
    ReplicaSummary s;
    if (!run_plan(ctx, plan, ctx.cfg.count("run.R"), s)) return kExitOk;

    Csv hits(ctx.file("hits.csv"), "replica,n_max,A,hit,tau,logW,maxmu,argmax_x");
    for (const auto& r : s.records) {
        for (std::size_t l = 0; l < plan.levels.size(); ++l) {
            const auto& h = r.overshoot[l];
            hits.row(r.id, plan.horizon, plan.levels[l], int(h.hit), h.time, h.log_w, h.max_mu,
                     h.hit ? site_cell(h.argmax) : std::string("\"\""));
        }
    }
    Csv csv(ctx.file("overshoot.csv"), "n_max,A,replicas,hits,censored,p_hit,p_hit_se,moment,moment_se,empty");
    for (const auto& row : overshoot_moments(s, p)) {
        csv.row(plan.horizon, row.A, row.replicas, row.hits, row.censored, row.p_hit, row.p_hit_se, row.moment, row.moment_se,
                int(row.empty));
        json j = record("overshoot_moment", row.empty ? std::nan("") : row.moment,
                        "mean of (W_tau / A)^p over hits; residual = standard error", row.moment_se, plan.horizon);
        j["A"] = row.A;
        j["p"] = p;
        j["hits"] = row.hits;
        ctx.results.push_back(j);
    }
    return kExitOk;
}

int cmd_localize(Context& ctx)
{
    auto plan = make_plan(ctx, static_cast<int>(ctx.cfg.integer("field.nmax", 1, 1000000)));
    plan.levels = ctx.cfg.reals("run.u");
    plan.stop_at_top_level = true;
    const auto deltas = ctx.cfg.reals("run.delta");
    ReplicaSummary s;
    if (!run_plan(ctx, plan, ctx.cfg.count("run.R"), s)) return kExitOk;

    Csv mu(ctx.file("maxmu.csv"), "n_max,u,replica,maxmu");
    for (const auto& r : s.records) {
        for (std::size_t l = 0; l < plan.levels.size(); ++l) {
            if (r.overshoot[l].hit) mu.row(plan.horizon, plan.levels[l], r.id, r.overshoot[l].max_mu);
        }
    }
    Csv csv(ctx.file("localization.csv"), "n_max,u,delta,hits,localized,frequency,se,empty");
    for (const auto& row : endpoint_localization(s, deltas)) {
        csv.row(plan.horizon, row.u, row.delta, row.hits, row.localized, row.frequency, row.se, int(row.empty));
        json j = record("localization_frequency", row.empty ? std::nan("") : row.frequency,
                        "P(max mu at tau_u >= delta | hit); residual = standard error", row.se, plan.horizon);
        j["u"] = row.u;
        j["delta"] = row.delta;
        ctx.results.push_back(j);
    }
    return kExitOk;
}

int cmd_second_moment(Context& ctx)
{
    const int n = static_cast<int>(ctx.cfg.integer("run.n", 1, 1000000));
    auto plan = make_plan(ctx, n);
    plan.grid_times = {n};
    ReplicaSummary s;
    if (!run_plan(ctx, plan, ctx.cfg.count("run.R"), s)) return kExitOk;
    const auto table = first_collision_law(return_prob_series(plan.kernel, n));
    const double exact = second_moment_renewal(table, overlap_factor(plan.env, plan.beta), n);
    const auto c = second_moment_check(s, 0, exact);
    Csv csv(ctx.file("second_moment.csv"), "n,replicas,mean,sigma,exact,z,fourth_half_1,fourth_half_2,heavy_tail");
    csv.row(c.n, c.replicas, c.mean, c.sigma, c.exact, c.z, c.fourth_half[0], c.fourth_half[1], int(c.heavy_tail));
    json j = record("second_moment", c.mean, "Monte Carlo E[W_n^2]; residual = MC - renewal", c.mean - exact, n);
    j["exact"] = exact;
    j["sigma"] = c.sigma;
    j["heavy_tail"] = c.heavy_tail;
    ctx.results.push_back(j);
    ctx.results.push_back(record("second_moment_renewal", exact, "renewal dynamic programme", 0.0, n));
    return kExitOk;
}

int cmd_critical_growth(Context& ctx)
{
    const WalkKernel k = make_walk(ctx.cfg);
    const int lo = static_cast<int>(ctx.cfg.integer("run.n_lo", 1, 10000000));
    const int hi = static_cast<int>(ctx.cfg.integer("run.n_hi", 1, 10000000));
    const int horizon = static_cast<int>(ctx.cfg.integer("walk.horizon", 1, 10000000));
    if (horizon < hi) throw ConfigError("walk.horizon must be at least run.n_hi");
    const auto c = collision_probability(k, ctx.cfg.real("run.tol"));
    if (c.verdict != GreenVerdict::transient) throw ConfigError("critical growth needs a transient difference walk");
    const auto table = first_collision_law(
        return_prob_series(k, horizon, static_cast<int>(ctx.cfg.integer("walk.quad_points", 2, 4096))));
    const auto fit = critical_growth_fit(table, 1.0 / c.pi,
                                         log_grid(lo, hi, static_cast<int>(ctx.cfg.integer("run.points", 3, 100000))),
                                         c.pi);
    Csv csv(ctx.file("growth.csv"), "n,f");
    for (std::size_t i = 0; i < fit.n.size(); ++i) csv.row(fit.n[i], fit.f[i]);
    ctx.results.push_back(record("critical_growth_slope", fit.slope,
                                 "least squares of log f on log n at chi = 1/pi; residual = slope stderr",
                                 fit.slope_stderr, hi));
    ctx.results.push_back(
        record("critical_growth_template_slope", fit.template_slope, "slope against log(n / log n)", 0.0, hi));
    ctx.results.push_back(record("pi", c.pi, c.method, c.achieved_tol, 0));
    return kExitOk;
}

int cmd_moment_growth(Context& ctx)
{
    auto grid = ctx.cfg.integers("run.n_grid");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto plan = make_plan(ctx, grid.back());
    plan.grid_times = grid;
    const double p = ctx.cfg.real("run.p");
    if (!(p >= 1.0)) throw ConfigError("run.p must be at least 1");
    ReplicaSummary s;
    if (!run_plan(ctx, plan, ctx.cfg.count("run.R"), s)) return kExitOk;
    Csv csv(ctx.file("moment_growth.csv"), "n,p,rate,rate_se,exact_rate,verdict");
    for (const auto& row : moment_growth(s, p, plan.kernel, plan.env, plan.beta)) {
        csv.row(row.n, p, row.rate, row.rate_se, row.exact_rate, row.verdict);
        json j = record("moment_growth_rate", row.rate, "(1/n) log mean W_n^p; residual = stderr", row.rate_se, row.n);
        j["p"] = p;
        j["exact_rate"] = row.exact_rate;
        j["verdict"] = row.verdict;
        ctx.results.push_back(j);
    }
    return kExitOk;
}

int cmd_fluct(Context& ctx)
{
    auto grid = ctx.cfg.integers("run.n_grid");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.size() < 3) throw ConfigError("run.n_grid needs at least three horizons for fluct");
    const WalkKernel kernel = make_walk(ctx.cfg);
    const EnvModel env = make_env(ctx.cfg);
    const double beta = ctx.beta();
    log_mgf(env, beta);
    const int box = static_cast<int>(ctx.cfg.integer("field.box", 0, 100000));
    const TestFunction f = TestFunction::bump(kernel.dim());
    const std::uint64_t seed = ctx.seed();
    if (box > 0) {
        for (int n : grid) {
            if (box < plane_required_box(f, n, kernel)) {
                throw ConfigError("field.box = " + std::to_string(box) + " is too small for n = " + std::to_string(n) +
                                  "; need " + std::to_string(plane_required_box(f, n, kernel)));
            }
        }
    }
    std::vector<Section> sections;
    for (int n : grid) {
        ReplicaSummary header;
        header.master_seed = seed;
        header.horizon = n;
        sections.push_back({header,
                            [=](std::uint64_t id) {
                                return one(fluctuation_samples(kernel, env, beta, n, box, f, seed, id, 1, 1));
                            },
                            ctx.cfg.count("run.R")});
    }
    std::vector<ReplicaSummary> done;
    if (!run_sections(ctx, sections, done)) return kExitOk;

    Csv samples(ctx.file("fluct_samples.csv"), "n,replica,fluctuation,riemann");
    std::vector<FluctuationRow> rows;
    for (const auto& s : done) {
        for (const auto& r : s.records) samples.row(s.horizon, r.id, r.samples[0], r.samples[1]);
        rows.push_back(summarize_fluctuation(s.horizon, s.records));
    }
    const auto fit = fit_fluctuation_scaling(rows, kernel.dim());
    Csv csv(ctx.file("fluct.csv"), "n,replicas,mean,variance,variance_se,riemann_mean,riemann_se");
    for (const auto& r : fit.rows) csv.row(r.n, r.replicas, r.mean, r.variance, r.variance_se, r.riemann_mean,
                                           r.riemann_se);
    json j = record("fluctuation_slope", fit.slope,
                    std::string("least squares of log Var on log n; residual = slope stderr") +
                        (fit.short_span ? "; grid spans less than a decade" : ""),
                    fit.slope_se, grid.back());
    j["predicted_slope"] = fit.predicted_slope;
    j["short_span"] = fit.short_span;
    ctx.results.push_back(j);
    return kExitOk;
}

int cmd_spine_check(Context& ctx)
{
    const WalkKernel kernel = make_walk(ctx.cfg);
    const EnvModel env = make_env(ctx.cfg);
    const double beta = ctx.beta();
    log_mgf(env, beta);
    const int n = static_cast<int>(ctx.cfg.integer("run.n", 1, 1000000));
    const std::uint64_t seed = ctx.seed();
    const auto battery = spine_battery();
    const auto chosen = std::find_if(battery.begin(), battery.end(),
                                     [&](const TestG& g) { return g.name == ctx.cfg.str("spine.g"); });
    if (chosen == battery.end()) throw ConfigError("spine.g must name a battery function, got " + ctx.cfg.str("spine.g"));

    ReplicaSummary header;
    header.master_seed = seed;
    header.horizon = n;
    const std::uint64_t R = ctx.cfg.count("run.R");
    std::vector<Section> sections{
        {header, [=](std::uint64_t id) { return one(spine_records(kernel, env, beta, n, seed, id, 1, 1)); }, R},
        {header, [=](std::uint64_t id) { return one(plain_records(kernel, env, beta, n, seed, id, 1, 1)); }, R},
    };
    std::vector<ReplicaSummary> done;
    if (!run_sections(ctx, sections, done)) return kExitOk;

    Csv sp(ctx.file("spine.csv"), "replica,n,logW_spine,g_value");
    for (const auto& r : done[0].records) sp.row(r.id, n, r.samples[0], chosen->g(std::exp(r.samples[0])));
    Csv pl(ctx.file("plain.csv"), "replica,n,logW,w_times_g");
    for (const auto& r : done[1].records) {
        const double w = std::exp(r.samples[0]);
        pl.row(r.id, n, r.samples[0], w * chosen->g(w));
    }
    Csv bat(ctx.file("spine_battery.csv"), "g,spine,spine_se,weighted,weighted_se,z");
    for (const auto& [name, g] : battery) {
        const auto a = spine_estimate(done[0].records, g);
        const auto b = weighted_estimate(done[1].records, g);
        const double se = std::hypot(a.sigma, b.sigma);
        const double z = se > 0 ? (a.value - b.value) / se : 0.0;
        bat.row(name, a.value, a.sigma, b.value, b.sigma, z);
        json j = record("size_biased_" + name, a.value,
                        "spine mean of g(W); residual = spine - weighted plain estimate", a.value - b.value, n);
        j["sigma"] = se;
        ctx.results.push_back(j);
    }
    if (env.family() == EnvFamily::two_point && kernel.dim() == 1 && n <= 2) {
        const double tv = total_variation(exact_spine_law(env, kernel, beta, n),
                                          size_biased_law(exact_law_of_Wn(env, kernel, beta, n)));
        ctx.results.push_back(record("spine_exact_tv", tv, "exact enumeration of spine and size-biased laws", tv, n));
    }
    return kExitOk;
}

int cmd_oracle_check(Context& ctx)
{
    const WalkKernel kernel = make_walk(ctx.cfg);
    const EnvModel env = make_env(ctx.cfg);
    const double beta = ctx.beta();
    log_mgf(env, beta);
    const int n = static_cast<int>(ctx.cfg.integer("run.n", 1, 64));
    const std::uint64_t seed = ctx.seed();
    constexpr double kTol = 1e-12;
    constexpr std::uint64_t kSeeds = 100;
    Csv csv(ctx.file("oracle.csv"), "check,n,max_rel_diff");
    double worst = 0.0;
    auto report = [&](const std::string& check, int t, double diff) {
        csv.row(check, t, diff);
        worst = std::max(worst, diff);
        if (!(diff <= kTol)) worst = std::max(worst, std::isnan(diff) ? INFINITY : diff);
    };

    std::vector<double> field_diff(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        const EnvironmentStream stream(env, replica_key(seed, s));
        const OmegaTable table = OmegaTable::from_stream(stream, kernel, n);
        PolymerField field = PolymerField::init_point(kernel, env, beta);
        for (int t = 1; t <= n; ++t) {
            field.evolve_step(stream);
            const double want = exact_log_partition(table, kernel, env, beta, t);
            field_diff[static_cast<std::size_t>(t)] =
                std::max(field_diff[static_cast<std::size_t>(t)], std::fabs(std::expm1(field.log_total() - want)));
        }
    }
    for (int t = 1; t <= n; ++t) report("field_vs_path_sum", t, field_diff[static_cast<std::size_t>(t)]);

    const int nr = std::min(n, 8);
    const auto table = first_collision_law(return_prob_series(kernel, nr));
    const double chi = overlap_factor(env, beta);
    for (int t = 1; t <= nr; ++t) {
        const double rep = replica_moment(kernel, env, beta, 2, t);
        const double ren = second_moment_renewal(table, chi, t);
        report("replica_vs_renewal", t, std::fabs(rep - ren) / ren);
    }
    if (env.family() == EnvFamily::two_point) {
        for (int t = 1; t <= std::min(n, 3); ++t) {
            const auto law = exact_law_of_Wn(env, kernel, beta, t);
            double m1 = 0.0;
            double m2 = 0.0;
            for (const auto& a : law) {
                m1 += a.probability * a.value;
                m2 += a.probability * a.value * a.value;
            }
            report("law_mean_one", t, std::fabs(m1 - 1.0));
            const double rep = replica_moment(kernel, env, beta, 2, t);
            report("law_vs_replica", t, std::fabs(m2 - rep) / rep);
        }
        if (kernel.dim() == 1) {
            for (int t = 1; t <= std::min(n, 2); ++t) {
                report("spine_total_variation", t,
                       total_variation(exact_spine_law(env, kernel, beta, t),
                                       size_biased_law(exact_law_of_Wn(env, kernel, beta, t))));
            }
        }
    }
    ctx.results.push_back(record("oracle_max_diff", worst, "largest relative difference over the exact suite",
                                 worst, n));
    if (!(worst <= kTol)) {
        std::cerr << "oracle check failed: largest difference " << num(worst) << " exceeds " << num(kTol) << '\n';
        return kExitNumerical;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

void write_outputs(Context& ctx, int code)
{
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.t0).count();
    if (ctx.complete) {
        std::ofstream(ctx.out / "results.json", std::ios::trunc) << ctx.results.dump(2) << '\n';
        ctx.outputs.push_back("results.json");
        std::cout << ctx.results.dump(2) << '\n';
    }
    {
        std::ofstream cfg(ctx.out / "resolved.cfg", std::ios::trunc);
        cfg << "# " << ctx.sub << " config hash " << ctx.cfg.hash(ctx.sub) << '\n' << ctx.cfg.canonical(true);
    }
    json config = json::object();
    for (const auto& [k, v] : ctx.cfg.values()) config[k] = v;
    json manifest{{"subcommand", ctx.sub},
                  {"config_hash", ctx.cfg.hash(ctx.sub)},
                  {"seed", ctx.cfg.str("run.seed")},
                  {"git_rev", POLYMERLAB_GIT_REV},
                  {"wall_time_seconds", wall},
                  {"workers", ctx.workers},
                  {"complete", ctx.complete},
                  {"exit_code", code},
                  {"outputs", ctx.outputs},
                  {"config", config}};
    std::ofstream(ctx.out / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

using Command = int (*)(Context&);

const std::vector<std::pair<std::string, Command>>& commands()
{
    static const std::vector<std::pair<std::string, Command>> table{
        {"lambda", cmd_lambda},
        {"beta2", cmd_beta2},
        {"evolve", cmd_evolve},
        {"tail", cmd_tail},
        {"overshoot", cmd_overshoot},
        {"localize", cmd_localize},
        {"second-moment", cmd_second_moment},
        {"critical-growth", cmd_critical_growth},
        {"moment-growth", cmd_moment_growth},
        {"fluct", cmd_fluct},
        {"spine-check", cmd_spine_check},
        {"oracle-check", cmd_oracle_check},
    };
    return table;
}

const std::vector<std::pair<std::string, std::string>>& aliases()
{
    static const std::vector<std::pair<std::string, std::string>> table{
        {"d", "walk.d"},     {"walk", "walk.kind"}, {"env", "env.family"}, {"beta", "run.beta"},
        {"n", "run.n"},      {"R", "run.R"},        {"seed", "run.seed"},  {"out", "out.dir"},
        {"workers", "run.workers"},
    };
    return table;
}

int run(int argc, char** argv)
{
    CLI::App app{"polymerlab: directed polymer simulations"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    bool list_keys = false;
    app.add_flag("--list-keys", list_keys, "List config keys with defaults");

    struct Flags {
        std::map<std::string, std::string> keys;
        std::map<std::string, std::string> alias;
        std::map<std::string, CLI::Option*> key_opts;
        std::map<std::string, CLI::Option*> alias_opts;
        std::string config;
        std::string resume;
        std::uint64_t stop_after = 0;
    };
    std::map<std::string, std::unique_ptr<Flags>> flags;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, fn] : commands()) {
        (void)fn;
        auto f = std::make_unique<Flags>();
        CLI::App* sub = app.add_subcommand(name);
        for (const auto& spec : polymer::cli::key_specs()) {
            f->key_opts[spec.name] = sub->add_option(std::string("--") + spec.name, f->keys[spec.name], spec.help);
        }
        for (const auto& [a, key] : aliases()) {
            f->alias_opts[a] = sub->add_option("--" + a, f->alias[a], "alias of --" + key);
        }
        sub->add_option("--config", f->config, "key=value config file or run manifest");
        sub->add_option("--resume", f->resume, "resume from a checkpoint file");
        sub->add_option("--stop-after", f->stop_after, "stop (and checkpoint) after this many new replicas");
        subs[name] = sub;
        flags[name] = std::move(f);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    if (list_keys) {
        for (const auto& s : polymer::cli::key_specs()) std::cout << s.name << " = " << s.fallback << "  # " << s.help << '\n';
        return kExitOk;
    }

    std::string name;
    for (const auto& [n, sub] : subs) {
        if (sub->parsed()) name = n;
    }
    Flags& f = *flags[name];
    Context ctx;
    ctx.sub = name;
    if (!f.config.empty()) {
        std::string manifest_sub;
        for (const auto& [k, v] : polymer::cli::read_config_file(f.config, &manifest_sub)) ctx.cfg.set(k, v);
        if (!manifest_sub.empty() && manifest_sub != name) {
            throw ConfigError("manifest " + f.config + " belongs to subcommand " + manifest_sub + ", not " + name);
        }
    }
    for (const auto& [key, opt] : f.key_opts) {
        if (opt->count()) ctx.cfg.set(key, f.keys[key]);
    }
    for (const auto& [a, key] : aliases()) {
        if (!f.alias_opts[a]->count()) continue;
        if (f.key_opts[key]->count() && f.keys[key] != f.alias[a]) {
            throw ConfigError("--" + a + " and --" + key + " disagree");
        }
        ctx.cfg.set(key, f.alias[a]);
    }
    ctx.resume = f.resume;
    ctx.stop_after = f.stop_after;
    const auto w = ctx.cfg.integer("run.workers", 0, 4096);
    ctx.workers = w > 0 ? static_cast<int>(w) : workers_from_environment();
    ctx.out = ctx.cfg.str("out.dir");
    fs::create_directories(ctx.out);

    int code = kExitOk;
    for (const auto& [n, fn] : commands()) {
        if (n == name) code = fn(ctx);
    }
    write_outputs(ctx, code);
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << " (achieved " << num(e.achieved()) << ")\n";
        return kExitNumerical;
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << '\n';
        return kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
