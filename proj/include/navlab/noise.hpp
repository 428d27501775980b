#pragma once
// Pose-delta noise models: 3-dof Gaussian mixtures over (x, y, o) with
// sampling, stable density evaluation, EM fitting, and held-out
// component-count selection. One mixture per (action, kind) pair —
// actuation and sensor — six in all. Angles are treated as unwrapped
// reals; noise magnitudes are far below pi, so wraparound never matters.

#include <navlab/rng.hpp>
#include <navlab/world.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace navlab {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline std::array<double, 3> to_array(const Vec3& v) { return {v.x, v.y, v.o}; }
inline Vec3 from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

inline Mat3 identity3(double s = 1.0) {
    return {{{s, 0, 0}, {0, s, 0}, {0, 0, s}}};
}

// Eigenvalues of a symmetric 3x3, ascending (trigonometric closed form).
inline std::array<double, 3> sym_eigenvalues3(const Mat3& a) {
    double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if (p1 == 0.0) {
        std::array<double, 3> d{a[0][0], a[1][1], a[2][2]};
        std::sort(d.begin(), d.end());
        return d;
    }
    double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) +
                (a[2][2] - q) * (a[2][2] - q) + 2.0 * p1;
    double p = std::sqrt(p2 / 6.0);
    Mat3 b;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
    double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                  b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                  b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    double r = std::clamp(detb / 2.0, -1.0, 1.0);
    double phi = std::acos(r) / 3.0;
    double e1 = q + 2.0 * p * std::cos(phi);
    double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    return {e3, 3.0 * q - e1 - e3, e1};
}

// Lower-triangular L with a = L L^T; throws if a is not positive definite.
inline Mat3 cholesky3(const Mat3& a) {
    Mat3 l{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (!(s > 0.0))
                    throw std::invalid_argument("cholesky3: covariance not positive definite");
                l[i][i] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    return l;
}

struct Gaussian3 {
    double weight = 1.0;
    Vec3 mean{0.0, 0.0, 0.0};
    Mat3 cov = identity3();
};

struct GaussianMixture3 {
    std::vector<Gaussian3> components;

    void validate() const {
        if (components.empty()) throw std::invalid_argument("mixture: no components");
        double sum = 0.0;
        for (const Gaussian3& c : components) {
            if (!(c.weight > 0.0)) throw std::invalid_argument("mixture: weights must be > 0");
            sum += c.weight;
            for (int i = 0; i < 3; ++i)
                for (int j = i + 1; j < 3; ++j)
                    if (std::abs(c.cov[i][j] - c.cov[j][i]) > 1e-12)
                        throw std::invalid_argument("mixture: covariance not symmetric");
            if (sym_eigenvalues3(c.cov)[0] < 1e-10)
                throw std::invalid_argument("mixture: covariance eigenvalue below 1e-10");
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("mixture: weights must sum to 1");
    }
};

// Ancestral sampling: component by weight, then mean + L z.
inline Vec3 sample(const GaussianMixture3& gmm, Rng& rng) {
    if (gmm.components.empty()) throw std::invalid_argument("sample: empty mixture");
    double u = rng.uniform();
    std::size_t pick = gmm.components.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < gmm.components.size(); ++i) {
        acc += gmm.components[i].weight;
        if (u < acc) {
            pick = i;
            break;
        }
    }
    const Gaussian3& c = gmm.components[pick];
    Mat3 l = cholesky3(c.cov);
    std::array<double, 3> z{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    std::array<double, 3> x = to_array(c.mean);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j <= i; ++j) x[i] += l[i][j] * z[j];
    return from_array(x);
}

namespace detail {

// log N(x; mean, cov) given the precomputed Cholesky factor of cov
inline double log_normal3(const Vec3& x, const Vec3& mean, const Mat3& l) {
    double logdet = 2.0 * (std::log(l[0][0]) + std::log(l[1][1]) + std::log(l[2][2]));
    std::array<double, 3> d{x.x - mean.x, x.y - mean.y, x.o - mean.o};
    std::array<double, 3> y{};
    for (int i = 0; i < 3; ++i) {
        double s = d[i];
        for (int j = 0; j < i; ++j) s -= l[i][j] * y[j];
        y[i] = s / l[i][i];
    }
    double quad = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    return -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

}  // namespace detail

// log sum_k w_k N(x; mu_k, Sigma_k), via log-sum-exp.
inline double log_density(const GaussianMixture3& gmm, const Vec3& x) {
    if (gmm.components.empty()) throw std::invalid_argument("log_density: empty mixture");
    std::vector<double> terms;
    terms.reserve(gmm.components.size());
    double m = -std::numeric_limits<double>::infinity();
    for (const Gaussian3& c : gmm.components) {
        double t = std::log(c.weight) + detail::log_normal3(x, c.mean, cholesky3(c.cov));
        terms.push_back(t);
        m = std::max(m, t);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

// --- EM fitting ----------------------------------------------------------------

struct EmOptions {
    int restarts = 5;  // independent k-means++ inits, best by train loglik
    int max_iters = 500;
    double tol = 1e-7;        // stop when the loglik gain drops below this
    double cov_floor = 1e-8;  // added to covariance diagonals after each M-step
};

struct EmRun {
    GaussianMixture3 model;
    std::vector<double> curve;  // mean train log-likelihood per iteration
};

namespace detail {

inline double dist2(const Vec3& a, const Vec3& b) {
    return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.o - b.o) * (a.o - b.o);
}

inline Mat3 scatter(const std::vector<Vec3>& x, const std::vector<double>& w, const Vec3& mean,
                    double wsum, double floor_eps) {
    Mat3 s{};
    for (std::size_t n = 0; n < x.size(); ++n) {
        std::array<double, 3> d{x[n].x - mean.x, x[n].y - mean.y, x[n].o - mean.o};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) s[i][j] += w[n] * d[i] * d[j];
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) s[i][j] /= wsum;
        s[i][i] += floor_eps;
    }
    return s;
}

inline GaussianMixture3 kmeanspp_init(const std::vector<Vec3>& x, int k, Rng& rng,
                                      double floor_eps) {
    const std::size_t n = x.size();
    std::vector<Vec3> centers;
    centers.push_back(x[rng.uniform_int(n)]);
    std::vector<double> best_d2(n);
    for (std::size_t i = 0; i < n; ++i) best_d2[i] = dist2(x[i], centers[0]);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (double d : best_d2) total += d;
        std::size_t idx;
        if (total <= 0.0) {
            idx = rng.uniform_int(n);  // all points coincide with a center
        } else {
            double r = rng.uniform() * total, acc = 0.0;
            idx = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += best_d2[i];
                if (r < acc) {
                    idx = i;
                    break;
                }
            }
        }
        centers.push_back(x[idx]);
        for (std::size_t i = 0; i < n; ++i)
            best_d2[i] = std::min(best_d2[i], dist2(x[i], centers.back()));
    }
    // hard assignment to the nearest center seeds the mixture statistics
    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double bd = dist2(x[i], centers[0]);
        for (int c = 1; c < k; ++c) {
            double d = dist2(x[i], centers[c]);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
    }
    GaussianMixture3 g;
    std::vector<double> ones(n, 1.0);
    std::array<double, 3> gacc{};
    for (const Vec3& p : x) {
        gacc[0] += p.x / double(n);
        gacc[1] += p.y / double(n);
        gacc[2] += p.o / double(n);
    }
    Vec3 gmean = from_array(gacc);
    Mat3 gcov = scatter(x, ones, gmean, double(n), floor_eps);
    for (int c = 0; c < k; ++c) {
        std::vector<double> w(n, 0.0);
        double cnt = 0.0;
        std::array<double, 3> acc{};
        for (std::size_t i = 0; i < n; ++i)
            if (assign[i] == c) {
                w[i] = 1.0;
                cnt += 1.0;
                acc[0] += x[i].x;
                acc[1] += x[i].y;
                acc[2] += x[i].o;
            }
        Gaussian3 comp;
        if (cnt < 1.0) {  // empty cluster: fall back to the global moments
            comp.weight = 1.0 / double(n);
            comp.mean = gmean;
            comp.cov = gcov;
        } else {
            for (double& v : acc) v /= cnt;
            comp.weight = cnt / double(n);
            comp.mean = from_array(acc);
            comp.cov = scatter(x, w, comp.mean, cnt, floor_eps);
        }
        g.components.push_back(comp);
    }
    double wsum = 0.0;
    for (const Gaussian3& c : g.components) wsum += c.weight;
    for (Gaussian3& c : g.components) c.weight /= wsum;
    return g;
}

inline EmRun em_once(const std::vector<Vec3>& x, int k, Rng& rng, const EmOptions& opt) {
    const std::size_t n = x.size();
    EmRun run;
    run.model = kmeanspp_init(x, k, rng, opt.cov_floor);
    std::vector<std::vector<double>> resp(k, std::vector<double>(n));
    std::vector<Mat3> chol(k);
    double prev = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < opt.max_iters; ++iter) {
        // E-step, accumulating the mean train log-likelihood
        for (int c = 0; c < k; ++c) chol[c] = cholesky3(run.model.components[c].cov);
        double loglik = 0.0;
        std::vector<double> terms(k);
        for (std::size_t i = 0; i < n; ++i) {
            double m = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                terms[c] = std::log(run.model.components[c].weight) +
                           log_normal3(x[i], run.model.components[c].mean, chol[c]);
                m = std::max(m, terms[c]);
            }
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(terms[c] - m);
            double li = m + std::log(s);
            loglik += li;
            for (int c = 0; c < k; ++c) resp[c][i] = std::exp(terms[c] - li);
        }
        loglik /= double(n);
        run.curve.push_back(loglik);
        if (iter > 0 && loglik - prev < opt.tol) break;
        prev = loglik;

        // M-step with covariance floor
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[c][i];
            if (nk < 1e-10 * double(n)) {
                // collapsed component: re-seed on the worst-explained point
                std::size_t worst = 0;
                double worst_l = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < n; ++i) {
                    double l = log_density(run.model, x[i]);
                    if (l < worst_l) {
                        worst_l = l;
                        worst = i;
                    }
                }
                run.model.components[c].weight = 1.0 / double(n);
                run.model.components[c].mean = x[worst];
                run.model.components[c].cov = identity3(opt.cov_floor * 100.0);
                continue;
            }
            std::array<double, 3> acc{};
            for (std::size_t i = 0; i < n; ++i) {
                acc[0] += resp[c][i] * x[i].x;
                acc[1] += resp[c][i] * x[i].y;
                acc[2] += resp[c][i] * x[i].o;
            }
            for (double& v : acc) v /= nk;
            run.model.components[c].weight = nk / double(n);
            run.model.components[c].mean = from_array(acc);
            run.model.components[c].cov = scatter(x, resp[c], run.model.components[c].mean, nk,
                                                  opt.cov_floor);
        }
        double wsum = 0.0;
        for (const Gaussian3& c : run.model.components) wsum += c.weight;
        for (Gaussian3& c : run.model.components) c.weight /= wsum;
    }
    return run;
}

}  // namespace detail

inline EmRun em_fit(const std::vector<Vec3>& samples, int k, Rng& rng, const EmOptions& opt = {}) {
    if (k < 1) throw std::invalid_argument("em_fit: k must be >= 1");
    if (samples.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("em_fit: fewer samples than components");
    Vec3 lo = samples[0], hi = samples[0];
    for (const Vec3& p : samples) {
        lo.x = std::min(lo.x, p.x);
        hi.x = std::max(hi.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.y = std::max(hi.y, p.y);
        lo.o = std::min(lo.o, p.o);
        hi.o = std::max(hi.o, p.o);
    }
    if (hi.x - lo.x < 1e-12 && hi.y - lo.y < 1e-12 && hi.o - lo.o < 1e-12)
        throw std::runtime_error("em_fit: degenerate samples (zero spread)");

    EmRun best;
    double best_l = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < opt.restarts; ++r) {
        EmRun run = detail::em_once(samples, k, rng, opt);
        if (run.curve.back() > best_l) {
            best_l = run.curve.back();
            best = std::move(run);
        }
    }
    return best;
}

struct FitResult {
    GaussianMixture3 model;
    int chosen_k = 0;
    std::vector<std::pair<int, double>> holdout_scores;  // (k, held-out loglik)
};

// Single held-out split (not multi-fold): shuffled, first `holdout_fraction`
// of the data scores candidate component counts; the winner is refit on all
// samples.
inline FitResult fit_gmm(const std::vector<Vec3>& samples, const std::vector<int>& k_candidates,
                         double holdout_fraction, Rng& rng, const EmOptions& opt = {}) {
    if (k_candidates.empty()) throw std::invalid_argument("fit_gmm: no candidate counts");
    int kmax = *std::max_element(k_candidates.begin(), k_candidates.end());
    if (samples.size() < static_cast<std::size_t>(10 * kmax))
        throw std::invalid_argument("fit_gmm: need at least 10*max(k) samples");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("fit_gmm: holdout_fraction must be in (0,1)");

    std::vector<Vec3> shuffled = samples;
    rng.shuffle(shuffled);
    std::size_t n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(holdout_fraction * double(shuffled.size()))));
    if (shuffled.size() - n_hold < static_cast<std::size_t>(kmax))
        throw std::invalid_argument("fit_gmm: holdout leaves too few training samples");
    std::vector<Vec3> hold(shuffled.begin(), shuffled.begin() + n_hold);
    std::vector<Vec3> train(shuffled.begin() + n_hold, shuffled.end());

    FitResult out;
    double best_score = -std::numeric_limits<double>::infinity();
    bool first = true;
    for (int k : k_candidates) {
        EmRun run = em_fit(train, k, rng, opt);
        double score = 0.0;
        for (const Vec3& p : hold) score += log_density(run.model, p);
        out.holdout_scores.emplace_back(k, score);
        if (first || score > best_score) {
            best_score = score;
            out.chosen_k = k;
            first = false;
        }
    }
    out.model = em_fit(samples, out.chosen_k, rng, opt).model;
    return out;
}

// --- Model set and persistence --------------------------------------------------

struct NoiseModelSet {
    std::map<Action, GaussianMixture3> actuation;
    std::map<Action, GaussianMixture3> sensor;

    void validate() const {
        for (Action a : {Action::Forward, Action::TurnLeft, Action::TurnRight}) {
            auto it_a = actuation.find(a);
            auto it_s = sensor.find(a);
            if (it_a == actuation.end() || it_s == sensor.end())
                throw std::invalid_argument("noise set: missing a required action model");
            it_a->second.validate();
            it_s->second.validate();
        }
    }
};

inline const char* action_token(Action a) {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::TurnLeft: return "turn_left";
        case Action::TurnRight: return "turn_right";
        default: throw std::invalid_argument("action_token: not a noise-model action");
    }
}

inline Action parse_action_token(const std::string& s) {
    if (s == "forward") return Action::Forward;
    if (s == "turn_left") return Action::TurnLeft;
    if (s == "turn_right") return Action::TurnRight;
    throw std::invalid_argument("unknown action token '" + s + "'");
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct FieldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double parse_double_field(const std::string& s, const char* field) {
    std::size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw FieldError(std::string("bad field '") + field + "': '" + s + "'");
    }
    if (used != s.size()) throw FieldError(std::string("bad field '") + field + "': '" + s + "'");
    return v;
}

inline std::vector<std::string> split_char(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// parses "key=value" tokens separated by spaces
inline std::map<std::string, std::string> parse_kv_tokens(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw FieldError("expected key=value, got '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

}  // namespace detail

inline void save_noise_models(const NoiseModelSet& set, const std::string& path) {
    set.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_noise_models: cannot open " + path);
    out << "schema: noise-models-v1\n";
    auto dump = [&](const char* kind, const std::map<Action, GaussianMixture3>& models) {
        for (Action a : {Action::Forward, Action::TurnLeft, Action::TurnRight}) {
            const GaussianMixture3& g = models.at(a);
            out << "model: kind=" << kind << " action=" << action_token(a)
                << " components=" << g.components.size() << "\n";
            for (const Gaussian3& c : g.components) {
                out << "component: weight=" << detail::fmt_g17(c.weight)
                    << " mean=" << detail::fmt_g17(c.mean.x) << ',' << detail::fmt_g17(c.mean.y)
                    << ',' << detail::fmt_g17(c.mean.o) << " cov=" << detail::fmt_g17(c.cov[0][0])
                    << ',' << detail::fmt_g17(c.cov[0][1]) << ',' << detail::fmt_g17(c.cov[0][2])
                    << ',' << detail::fmt_g17(c.cov[1][1]) << ',' << detail::fmt_g17(c.cov[1][2])
                    << ',' << detail::fmt_g17(c.cov[2][2]) << "\n";
            }
        }
    };
    dump("actuation", set.actuation);
    dump("sensor", set.sensor);
    if (!out) throw std::runtime_error("save_noise_models: write failed for " + path);
}

inline NoiseModelSet load_noise_models(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_noise_models: cannot open " + path);
    NoiseModelSet set;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("load_noise_models: " + path + ":" + std::to_string(lineno) +
                                 ": " + what);
    };

    if (!std::getline(in, line)) fail("empty file");
    ++lineno;
    if (line != "schema: noise-models-v1") fail("bad field 'schema': '" + line + "'");

    GaussianMixture3* current = nullptr;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(": ");
        if (colon == std::string::npos) fail("expected 'key: value'");
        std::string key = line.substr(0, colon), rest = line.substr(colon + 2);
        try {
            if (key == "model") {
                if (current && current->components.size() != expected)
                    fail("bad field 'components': expected " + std::to_string(expected));
                auto kv = detail::parse_kv_tokens(rest);
                for (const char* f : {"kind", "action", "components"})
                    if (!kv.count(f))
                        throw detail::FieldError(std::string("missing field '") + f + "'");
                Action a = parse_action_token(kv["action"]);
                expected = static_cast<std::size_t>(
                    detail::parse_double_field(kv["components"], "components"));
                if (kv["kind"] == "actuation")
                    current = &set.actuation[a];
                else if (kv["kind"] == "sensor")
                    current = &set.sensor[a];
                else
                    throw detail::FieldError("bad field 'kind': '" + kv["kind"] + "'");
                if (!current->components.empty())
                    throw detail::FieldError("duplicate model for action '" + kv["action"] + "'");
            } else if (key == "component") {
                if (!current) fail("component before any model header");
                auto kv = detail::parse_kv_tokens(rest);
                for (const char* f : {"weight", "mean", "cov"})
                    if (!kv.count(f))
                        throw detail::FieldError(std::string("missing field '") + f + "'");
                Gaussian3 c;
                c.weight = detail::parse_double_field(kv["weight"], "weight");
                auto mean = detail::split_char(kv["mean"], ',');
                if (mean.size() != 3) throw detail::FieldError("bad field 'mean': need 3 values");
                c.mean = {detail::parse_double_field(mean[0], "mean"),
                          detail::parse_double_field(mean[1], "mean"),
                          detail::parse_double_field(mean[2], "mean")};
                auto cov = detail::split_char(kv["cov"], ',');
                if (cov.size() != 6) throw detail::FieldError("bad field 'cov': need 6 values");
                double u[6];
                for (int i = 0; i < 6; ++i) u[i] = detail::parse_double_field(cov[i], "cov");
                c.cov = {{{u[0], u[1], u[2]}, {u[1], u[3], u[4]}, {u[2], u[4], u[5]}}};
                current->components.push_back(c);
            } else {
                fail("unknown key '" + key + "'");
            }
        } catch (const detail::FieldError& e) {
            fail(e.what());
        }
    }
    if (current && current->components.size() != expected)
        fail("bad field 'components': expected " + std::to_string(expected));
    set.validate();
    return set;
}

// Samples as CSV rows "x,y,o"; a non-numeric first line is taken as a header.
inline std::vector<Vec3> load_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_samples_csv: cannot open " + path);
    std::vector<Vec3> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = detail::split_char(line, ',');
        if (cells.size() != 3)
            throw std::runtime_error("load_samples_csv: " + path + ":" + std::to_string(lineno) +
                                     ": need 3 columns");
        try {
            out.push_back({detail::parse_double_field(cells[0], "sample"),
                           detail::parse_double_field(cells[1], "sample"),
                           detail::parse_double_field(cells[2], "sample")});
        } catch (const detail::FieldError&) {
            if (lineno == 1) continue;  // header row
            throw std::runtime_error("load_samples_csv: " + path + ":" + std::to_string(lineno) +
                                     ": non-numeric value");
        }
    }
    return out;
}

// GMM-backed implementation of the pose-noise interface the simulator takes.
// `scale` multiplies every sampled delta, so 0 recovers exact motion and the
// noise magnitude can be swept without refitting.
class GmmNoiseSampler : public PoseNoiseSampler {
public:
    GmmNoiseSampler(NoiseModelSet models, std::uint64_t seed, double scale = 1.0)
        : models_(std::move(models)), rng_(seed), scale_(scale) {
        models_.validate();
    }

    Vec3 actuation(Action a) override { return draw(models_.actuation.at(a)); }
    Vec3 sensor(Action a) override { return draw(models_.sensor.at(a)); }

private:
    Vec3 draw(const GaussianMixture3& g) {
        Vec3 v = navlab::sample(g, rng_);
        return {v.x * scale_, v.y * scale_, v.o * scale_};
    }

    NoiseModelSet models_;
    Rng rng_;
    double scale_;
};

// Synthetic illustrative model set (NOT measured data): forward motion picks
// up a small heading drift, turns pick up a small translation, and sensor
// noise is a single wider blob per action. Shipped so the pipeline runs end
// to end; drop in fitted models from real CSV data to replace it.
inline NoiseModelSet make_default_noise_models() {
    NoiseModelSet set;
    auto gm = [](std::vector<Gaussian3> cs) {
        GaussianMixture3 g;
        g.components = std::move(cs);
        return g;
    };
    auto diag = [](double x, double y, double o) {
        Mat3 m{};
        m[0][0] = x;
        m[1][1] = y;
        m[2][2] = o;
        return m;
    };
    set.actuation[Action::Forward] =
        gm({{0.85, {0.012, 0.003, 0.006}, diag(4e-4, 2.5e-4, 6e-4)},
            {0.15, {-0.025, -0.008, -0.015}, diag(1.6e-3, 9e-4, 2.2e-3)}});
    set.actuation[Action::TurnLeft] = gm({{0.8, {0.002, 0.001, 0.014}, diag(1e-4, 1e-4, 9e-4)},
                                          {0.2, {-0.004, -0.002, -0.02}, diag(4e-4, 4e-4, 2.5e-3)}});
    set.actuation[Action::TurnRight] =
        gm({{0.8, {0.002, -0.001, -0.014}, diag(1e-4, 1e-4, 9e-4)},
            {0.2, {-0.004, 0.002, 0.02}, diag(4e-4, 4e-4, 2.5e-3)}});
    set.sensor[Action::Forward] = gm({{1.0, {-0.004, 0.001, -0.002}, diag(9e-4, 6e-4, 1.2e-3)}});
    set.sensor[Action::TurnLeft] = gm({{1.0, {0.001, 0.001, 0.005}, diag(3e-4, 3e-4, 1.8e-3)}});
    set.sensor[Action::TurnRight] = gm({{1.0, {0.001, -0.001, -0.005}, diag(3e-4, 3e-4, 1.8e-3)}});
    return set;
}

}  // namespace navlab
