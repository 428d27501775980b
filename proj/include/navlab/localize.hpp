#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/belief.hpp"
#include "navlab/parallel.hpp"
#include "navlab/world.hpp"

namespace navlab {

struct AmlConfig {
    int n_l = 1;   // lookahead length
    int n_g = 1;   // actions committed per plan
    int n_m = 5;   // concentration state count
    double tau = 1e-3;  // belief-ignore threshold

    void validate() const {
        if (n_g < 1 || n_g > n_l) throw std::invalid_argument("aml: need 1 <= n_g <= n_l");
        if (n_m < 1) throw std::invalid_argument("aml: n_m must be >= 1");
        if (tau < 0 || tau >= 1) throw std::invalid_argument("aml: tau must be in [0, 1)");
    }
};

inline Action random_policy(Rng& rng) {
    return static_cast<Action>(rng.uniform_int(3));  // never Stop
}

// Inclusive rule: concentrated iff at most n_m entries exceed tau.
inline bool is_concentrated(const BeliefGrid& belief, const AmlConfig& cfg) {
    int count = 0;
    for (std::size_t i = 0; i < belief.size(); ++i)
        if (belief[i] > cfg.tau) {
            if (++count > cfg.n_m) return false;
        }
    return true;
}

// Planning ignores sub-threshold mass: entries > tau are kept and
// renormalized (plain left-to-right sum in ascending state order; the
// order is part of the planner's reproducibility contract). Falls back to
// the full support if nothing clears tau.
inline BeliefGrid truncate_for_planning(const BeliefGrid& belief, double tau) {
    BeliefGrid out(belief.width(), belief.height());
    double z = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i)
        if (belief[i] > tau) z += belief[i];
    if (z == 0.0) {
        for (std::size_t i = 0; i < belief.size(); ++i)
            if (belief[i] > 0.0) z += belief[i];
        for (std::size_t i = 0; i < belief.size(); ++i)
            if (belief[i] > 0.0) out[i] = belief[i] / z;
        return out;
    }
    for (std::size_t i = 0; i < belief.size(); ++i)
        if (belief[i] > tau) out[i] = belief[i] / z;
    return out;
}

// Expected posterior entropy after propagating the belief through the
// action sequence and observing depth once at the end. Exact: sums over
// the pushforward observation distribution, no sampling.
// E[H] = sum_d (S_d + p_d ln p_d) with S_d = -sum_{y: depth(y)=d} p ln p,
// all accumulations in ascending state order, depth groups in ascending d.
inline double expected_entropy_after(const BeliefGrid& belief, std::span<const Action> seq,
                                     const GridWorld& world) {
    if (seq.empty()) throw std::invalid_argument("expected_entropy_after: empty sequence");
    BeliefGrid b = belief;
    for (Action a : seq) b = transition(b, a, world);
    DepthTable table(world);
    std::map<int, std::pair<double, double>> groups;  // d -> (p_d, S_d)
    for (std::size_t i = 0; i < b.size(); ++i) {
        double p = b[i];
        if (p <= 0.0) continue;
        DiscretePose y = b.state_of(i);
        auto& [pd, sd] = groups[table.at(y.o, y.x, y.y)];
        pd += p;
        sd += -p * std::log(p);
    }
    double e = 0.0;
    for (const auto& [d, g] : groups) e += g.second + g.first * std::log(g.first);
    return e;
}

namespace detail {

// Sparse mirror of the planner belief: (state index, probability), ascending.
using SparseBelief = std::vector<std::pair<std::uint32_t, double>>;

inline SparseBelief to_sparse(const BeliefGrid& b) {
    SparseBelief s;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b[i] != 0.0) s.emplace_back(static_cast<std::uint32_t>(i), b[i]);
    return s;
}

inline double sparse_entropy(const SparseBelief& b) {
    double s = 0, c = 0;
    for (const auto& [i, p] : b) {
        if (p <= 0.0) continue;
        double term = -p * std::log(p);
        double t = term - c;
        double u = s + t;
        c = (u - s) - t;
        s = u;
    }
    return s;
}

// Expected final entropy when the agent keeps observing after every action
// of the sequence. Transitions and per-state depths are deterministic, so
// the observation tree collapses: each start state emits a fixed depth
// signature, and the expectation is a sum over signature classes of merged
// end-state masses. Accumulation order is fixed (source states ascending,
// classes in lexicographic signature order, plain left-to-right sums) so
// independent re-implementations can match bit for bit.
inline double signature_expected_entropy(const SparseBelief& b, std::span<const Action> seq,
                                         const GridWorld& world, const DepthTable& table,
                                         const BeliefGrid& frame) {
    std::map<std::vector<int>, std::map<std::uint32_t, double>> groups;
    std::vector<int> sig(seq.size());
    for (const auto& [i, m] : b) {
        DiscretePose s = frame.state_of(i);
        for (std::size_t k = 0; k < seq.size(); ++k) {
            s = discrete_step(world, s, seq[k]);
            sig[k] = table.at(s.o, s.x, s.y);
        }
        groups[sig][static_cast<std::uint32_t>(frame.index(s.o, s.x, s.y))] += m;
    }
    double eh = 0.0;
    for (const auto& [key, grp] : groups) {
        double mu = 0.0, s_term = 0.0;
        for (const auto& [e, m] : grp) {
            mu += m;
            s_term += -m * std::log(m);
        }
        eh += s_term + mu * std::log(mu);
    }
    return eh;
}

}  // namespace detail

// Memo of expected end entropies keyed by (belief fingerprint, action
// sequence). Keys hold the exact sparse belief, so a hit can never alias a
// different belief; cached and uncached runs are bit-identical. Shared
// across successive plans, it makes re-planning from an unchanged belief
// free: every sequence is answered from the memo.
class EntropyCache {
public:
    std::uint64_t hits = 0;

    std::optional<double> find(const detail::SparseBelief& b, std::span<const Action> seq) {
        auto it = memo_.find(make_key(b, seq));
        if (it == memo_.end()) return std::nullopt;
        ++hits;
        return it->second;
    }
    void store(const detail::SparseBelief& b, std::span<const Action> seq, double v) {
        memo_.emplace(make_key(b, seq), v);
    }
    void clear() { memo_.clear(); }
    std::size_t size() const { return memo_.size(); }

private:
    using Key = std::pair<detail::SparseBelief, std::vector<Action>>;
    static Key make_key(const detail::SparseBelief& b, std::span<const Action> seq) {
        return {b, std::vector<Action>(seq.begin(), seq.end())};
    }
    std::map<Key, double> memo_;
};

struct AmlChoice {
    std::vector<Action> actions;   // first n_g of the maximizing sequence
    std::vector<Action> sequence;  // the full length-n_l maximizer
    double utility = 0;            // H(planning belief) - E[H after chosen sequence]
    std::uint64_t evals = 0;       // sequences evaluated fresh (memo misses)
};

// Enumerates all |A|^{n_l} sequences in lexicographic (Forward, TurnLeft,
// TurnRight) order and returns the first n_g actions of the utility
// maximizer; ties keep the lexicographically first sequence. Utility is the
// expected entropy drop for an agent that keeps observing while executing
// the sequence (see signature_expected_entropy); for n_l = 1 this equals
// H(belief) - expected_entropy_after(belief, [a]).
inline AmlChoice aml_select(const BeliefGrid& belief, const GridWorld& world, const AmlConfig& cfg,
                            EntropyCache* cache = nullptr) {
    cfg.validate();
    BeliefGrid planning = truncate_for_planning(belief, cfg.tau);
    detail::SparseBelief b0 = detail::to_sparse(planning);
    DepthTable table(world);

    const double h_now = detail::sparse_entropy(b0);
    std::vector<Action> seq(cfg.n_l, Action::Forward);
    std::vector<Action> best_seq;
    double best_eh = 0;
    bool first = true;
    std::uint64_t evals = 0;

    for (;;) {
        double eh;
        std::optional<double> hit = cache ? cache->find(b0, seq) : std::nullopt;
        if (hit) {
            eh = *hit;
        } else {
            eh = detail::signature_expected_entropy(b0, seq, world, table, planning);
            ++evals;
            if (cache) cache->store(b0, seq, eh);
        }
        if (first || eh < best_eh) {  // strict: lex-first sequence wins ties
            best_eh = eh;
            best_seq = seq;
            first = false;
        }
        // next sequence in lex order
        int i = cfg.n_l - 1;
        while (i >= 0 && seq[i] == Action::TurnRight) seq[i--] = Action::Forward;
        if (i < 0) break;
        seq[i] = static_cast<Action>(static_cast<int>(seq[i]) + 1);
    }

    AmlChoice choice;
    choice.actions.assign(best_seq.begin(), best_seq.begin() + cfg.n_g);
    choice.sequence = best_seq;
    choice.utility = h_now - best_eh;
    choice.evals = evals;
    return choice;
}

// --- Episode protocol --------------------------------------------------------

struct TraceStep {
    DiscretePose true_pose;
    int observation = 0;
    Action action = Action::Stop;  // Stop marks the final, action-less step
    double reward = 0;
    double entropy_nats = 0;
};

struct EpisodeResult {
    bool correct = false;
    bool diverged = false;
    std::string diagnostic;
    std::vector<double> rewards;  // one per step; steps == episode_len
    int steps = 0;
    double wall_time = 0;  // seconds
    std::uint64_t planner_evals = 0;
    int plans = 0;
    std::vector<TraceStep> trace;  // filled only when requested
};

struct LocalizePolicy {
    enum class Kind { Markov, Aml, External } kind = Kind::Markov;
    AmlConfig cfg;
    bool use_cache = true;
    std::function<Action(const BeliefGrid&, const GridWorld&, int)> external;

    static LocalizePolicy markov() { return {}; }
    static LocalizePolicy aml(const AmlConfig& c, bool cache = true) {
        return {Kind::Aml, c, cache, nullptr};
    }
};

// One episode: observe -> update -> record reward, then act, repeated for
// episode_len observation steps (episode_len - 1 actions). AML follows
// random warm-up until the belief concentrates, then plans. The first n_g
// actions of a plan are committed unconditionally; after that the plan
// stays in force until an observation actually refines the belief
// (likelihoods are 0/1, so refinement means the support strictly shrank).
// Replanning exists to react to new information, and a fully predicted
// observation carries none — replanning on it would just re-defer the
// plan's informative turns by one more step, forever. A plan that ran to
// completion without learning anything and without moving the belief is
// provably stuck (every action was a blocked forward), so the episode
// breaks the loop with a random turn.
inline EpisodeResult run_localization_episode(const GridWorld& world, const DiscretePose& start,
                                              const LocalizePolicy& policy, int episode_len,
                                              Rng& rng, bool record_trace = false) {
    if (episode_len < 1) throw std::invalid_argument("episode_len must be >= 1");
    auto t0 = std::chrono::steady_clock::now();

    EpisodeResult res;
    BeliefGrid belief = uniform_prior(world);
    DiscretePose truth = start;
    EntropyCache cache;
    std::vector<Action> plan;
    std::size_t pos = 0;
    BeliefGrid planned_from(world.width(), world.height());
    bool plan_live = false;
    bool plan_dirty = false;  // informative observation since the plan was made

    auto support_count = [](const BeliefGrid& b) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < b.size(); ++i)
            if (b[i] != 0.0) ++n;
        return n;
    };

    for (int t = 0; t < episode_len; ++t) {
        int obs = depth_observation(world, truth);
        std::size_t support_before = support_count(belief);
        try {
            belief = bayes_update(belief, likelihood_from_depth(world, obs));
        } catch (const FilterDivergence& e) {
            res.diverged = true;
            res.diagnostic = std::string(e.what()) + " at step " + std::to_string(t);
            break;
        }
        if (support_count(belief) < support_before) plan_dirty = true;
        res.rewards.push_back(step_reward(belief));
        ++res.steps;
        if (record_trace)
            res.trace.push_back({truth, obs, Action::Stop, step_reward(belief), entropy(belief)});
        if (t == episode_len - 1) break;

        Action a;
        switch (policy.kind) {
            case LocalizePolicy::Kind::Markov: a = random_policy(rng); break;
            case LocalizePolicy::Kind::External: a = policy.external(belief, world, t); break;
            case LocalizePolicy::Kind::Aml: {
                if (plan_live && pos < plan.size() &&
                    (pos < std::size_t(policy.cfg.n_g) || !plan_dirty)) {
                    a = plan[pos++];
                    break;
                }
                if (plan_live && pos >= plan.size() && !plan_dirty && belief == planned_from) {
                    // stuck: the maximizer itself was a no-op, so force a turn
                    a = rng.uniform_int(2) == 0 ? Action::TurnLeft : Action::TurnRight;
                    plan_live = false;
                    break;
                }
                plan_live = false;
                if (is_concentrated(belief, policy.cfg)) {
                    AmlChoice choice = aml_select(belief, world, policy.cfg,
                                                  policy.use_cache ? &cache : nullptr);
                    plan = choice.sequence;
                    planned_from = belief;
                    pos = 0;
                    plan_live = true;
                    plan_dirty = false;
                    res.planner_evals += choice.evals;
                    ++res.plans;
                    a = plan[pos++];
                } else {
                    a = random_policy(rng);
                }
                break;
            }
            default: a = random_policy(rng);
        }
        if (record_trace) res.trace.back().action = a;

        belief = transition(belief, a, world);
        truth = discrete_step(world, truth, a);
    }

    res.correct = !res.diverged && map_estimate(belief) == truth;
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// --- Benchmark suite ---------------------------------------------------------

struct BenchCell {
    int size = 7;
    int episode_len = 15;
};

struct BenchPolicy {
    std::string name;  // "markov" or "aml"
    LocalizePolicy policy;
};

struct BenchConfig {
    std::vector<BenchCell> cells;
    std::vector<BenchPolicy> policies;
    int episodes = 1000;
    std::uint64_t master_seed = 0;
    int workers = 1;
};

struct EpisodeRow {
    int cell = 0, policy = 0, episode = 0;
    std::uint64_t world_seed = 0;
    bool correct = false;
    double final_reward = 0;
    int steps = 0;
};

struct CellMetrics {
    int cell = 0, policy = 0;
    int episodes = 0;
    double accuracy = 0;
    double mean_final_reward = 0;
    double wall_seconds = 0;  // summed episode compute time
};

struct BenchResult {
    std::vector<EpisodeRow> rows;
    std::vector<CellMetrics> metrics;
};

// The same (cell, episode) index maps to the same maze and start pose for
// every policy, pairing the comparison across policies. All seeds derive
// from the master seed by counter hashing, so results are worker-count
// independent and byte-stable.
inline BenchResult evaluate_suite(const BenchConfig& cfg) {
    BenchResult out;
    if (cfg.episodes <= 0 || cfg.cells.empty() || cfg.policies.empty()) return out;

    struct Item {
        int cell, policy, episode;
    };
    std::vector<Item> items;
    for (int c = 0; c < static_cast<int>(cfg.cells.size()); ++c)
        for (int p = 0; p < static_cast<int>(cfg.policies.size()); ++p)
            for (int e = 0; e < cfg.episodes; ++e) items.push_back({c, p, e});

    out.rows.resize(items.size());
    std::vector<double> wall(items.size(), 0.0);

    parallel_for(items.size(), cfg.workers, [&](std::size_t idx) {
        auto item_t0 = std::chrono::steady_clock::now();
        const Item& it = items[idx];
        const BenchCell& cell = cfg.cells[it.cell];
        std::uint64_t cell_base = hash_seed(cfg.master_seed, std::uint64_t(it.cell) + 1);
        std::uint64_t world_seed = hash_seed(cell_base, 2 * std::uint64_t(it.episode));
        Rng start_rng(hash_seed(cell_base, 2 * std::uint64_t(it.episode) + 1));

        GridWorld maze = generate_maze(cell.size, cell.size, world_seed);
        std::vector<DiscretePose> frees;
        for (int y = 0; y < maze.height(); ++y)
            for (int x = 0; x < maze.width(); ++x)
                if (maze.free_cell(x, y))
                    frees.push_back({x, y, 0});
        DiscretePose start = frees[start_rng.uniform_int(frees.size())];
        start.o = static_cast<int>(start_rng.uniform_int(4));

        Rng policy_rng(hash_seed(cell_base ^ splitmix64(0xA11CE + it.policy),
                                 std::uint64_t(it.episode)));
        EpisodeResult r = run_localization_episode(maze, start, cfg.policies[it.policy].policy,
                                                   cell.episode_len, policy_rng);
        out.rows[idx] = {it.cell,  it.policy,
                         it.episode, world_seed,
                         r.correct,  r.rewards.empty() ? 0.0 : r.rewards.back(),
                         r.steps};
        wall[idx] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - item_t0).count();
    });

    for (int c = 0; c < static_cast<int>(cfg.cells.size()); ++c)
        for (int p = 0; p < static_cast<int>(cfg.policies.size()); ++p) {
            CellMetrics m{c, p, 0, 0, 0, 0};
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (items[i].cell != c || items[i].policy != p) continue;
                ++m.episodes;
                m.accuracy += out.rows[i].correct ? 1.0 : 0.0;
                m.mean_final_reward += out.rows[i].final_reward;
                m.wall_seconds += wall[i];
            }
            if (m.episodes > 0) {
                m.accuracy /= m.episodes;
                m.mean_final_reward /= m.episodes;
            }
            out.metrics.push_back(m);
        }
    return out;
}

}  // namespace navlab
