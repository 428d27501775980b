#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "navlab/world.hpp"

namespace navlab {

// Observation inconsistent with the belief support (Z = 0). In the
// noiseless setting this indicates a bug upstream, so it is an error
// rather than a silent reset.
struct FilterDivergence : std::runtime_error {
    FilterDivergence() : std::runtime_error("bayes_update: zero normalization constant") {}
};

struct LikelihoodGrid {
    int width = 0, height = 0;
    std::vector<double> v;  // (o*height + y)*width + x, non-negative
};

// O x M x N posterior over (orientation, cell). Non-negative, zero on
// obstacle cells, sums to 1 within 1e-9 after every public operation.
// Value type: operations return fresh grids.
class BeliefGrid {
public:
    BeliefGrid(int width, int height)
        : width_(width), height_(height),
          p_(std::size_t(kOrientations) * width * height, 0.0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return p_.size(); }

    double& at(int o, int x, int y) { return p_[index(o, x, y)]; }
    double at(int o, int x, int y) const { return p_[index(o, x, y)]; }
    double& operator[](std::size_t i) { return p_[i]; }
    double operator[](std::size_t i) const { return p_[i]; }

    std::size_t index(int o, int x, int y) const {
        return (std::size_t(o) * height_ + y) * width_ + x;
    }
    DiscretePose state_of(std::size_t i) const {
        int x = static_cast<int>(i % width_);
        int y = static_cast<int>((i / width_) % height_);
        int o = static_cast<int>(i / (std::size_t(width_) * height_));
        return {x, y, o};
    }

    double sum() const {
        double s = 0, c = 0;
        for (double x : p_) {
            double t = x - c;
            double u = s + t;
            c = (u - s) - t;
            s = u;
        }
        return s;
    }

    bool operator==(const BeliefGrid& other) const = default;

private:
    int width_, height_;
    std::vector<double> p_;
};

inline BeliefGrid uniform_prior(const GridWorld& world) {
    int free = world.free_count();
    if (free == 0) throw std::invalid_argument("uniform_prior: world has no free cell");
    BeliefGrid b(world.width(), world.height());
    const double mass = 1.0 / (kOrientations * double(free));
    for (int o = 0; o < kOrientations; ++o)
        for (int y = 0; y < world.height(); ++y)
            for (int x = 0; x < world.width(); ++x)
                if (world.free_cell(x, y)) b.at(o, x, y) = mass;
    return b;
}

// Entry 1 on every state whose depth equals the observation, 0 elsewhere.
inline LikelihoodGrid likelihood_from_depth(const GridWorld& world, int depth) {
    DepthTable table(world);
    LikelihoodGrid lik{world.width(), world.height(),
                       std::vector<double>(std::size_t(kOrientations) * world.width() *
                                               world.height(),
                                           0.0)};
    for (int o = 0; o < kOrientations; ++o)
        for (int y = 0; y < world.height(); ++y)
            for (int x = 0; x < world.width(); ++x)
                if (world.free_cell(x, y) && table.at(o, x, y) == depth)
                    lik.v[(std::size_t(o) * world.height() + y) * world.width() + x] = 1.0;
    return lik;
}

// Deterministic pushforward: turns permute the orientation planes, Forward
// shifts each plane one cell along its orientation with blocked mass
// staying in place (a collision). Mass is conserved exactly: every entry is
// moved, and a cell receives at most its own stuck mass plus one pusher.
inline BeliefGrid transition(const BeliefGrid& belief, Action action, const GridWorld& world) {
    BeliefGrid out(belief.width(), belief.height());
    if (action == Action::TurnLeft || action == Action::TurnRight || action == Action::Stop) {
        int shift = action == Action::TurnLeft ? 1 : action == Action::TurnRight ? 3 : 0;
        for (int o = 0; o < kOrientations; ++o)
            for (int y = 0; y < belief.height(); ++y)
                for (int x = 0; x < belief.width(); ++x)
                    out.at((o + shift) % kOrientations, x, y) = belief.at(o, x, y);
        return out;
    }
    for (int o = 0; o < kOrientations; ++o)
        for (int y = 0; y < belief.height(); ++y)
            for (int x = 0; x < belief.width(); ++x) {
                double m = belief.at(o, x, y);
                if (m == 0.0) continue;
                int nx = x + kDx[o], ny = y + kDy[o];
                if (world.free_cell(nx, ny))
                    out.at(o, nx, ny) += m;
                else
                    out.at(o, x, y) += m;
            }
    return out;
}

inline BeliefGrid bayes_update(const BeliefGrid& prior, const LikelihoodGrid& lik) {
    if (prior.width() != lik.width || prior.height() != lik.height)
        throw std::invalid_argument("bayes_update: shape mismatch");
    BeliefGrid post(prior.width(), prior.height());
    double z = 0, c = 0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        double w = prior[i] * lik.v[i];
        post[i] = w;
        double t = w - c;
        double u = z + t;
        c = (u - z) - t;
        z = u;
    }
    if (z <= 0.0) throw FilterDivergence();
    for (std::size_t i = 0; i < post.size(); ++i) post[i] /= z;
    return post;
}

// -sum p ln p in nats, compensated summation.
inline double entropy(const BeliefGrid& belief) {
    double s = 0, c = 0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        double p = belief[i];
        if (p <= 0.0) continue;
        double term = -p * std::log(p);
        double t = term - c;
        double u = s + t;
        c = (u - s) - t;
        s = u;
    }
    return s;
}

// Argmax entry; ties go to the lowest (o, y, x) lexicographic index, which
// is exactly ascending storage order.
inline DiscretePose map_estimate(const BeliefGrid& belief) {
    std::size_t best = 0;
    double best_p = belief[0];
    for (std::size_t i = 1; i < belief.size(); ++i)
        if (belief[i] > best_p) {
            best_p = belief[i];
            best = i;
        }
    return belief.state_of(best);
}

inline double step_reward(const BeliefGrid& belief) {
    double m = 0;
    for (std::size_t i = 0; i < belief.size(); ++i) m = std::max(m, belief[i]);
    return m;
}

}  // namespace navlab
