#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "navlab/mapping.hpp"
#include "navlab/rng.hpp"
#include "navlab/world.hpp"

namespace navlab {

// Travel-time field over a world-anchored cell grid; +inf marks unreachable.
struct DistanceField {
    int w = 0, h = 0;
    double resolution = kMapResolution;
    double origin_x = 0.0, origin_y = 0.0;  // world coords of the (0,0) cell corner
    std::vector<double> t;

    bool in_bounds(int x, int y) const { return x >= 0 && x < w && y >= 0 && y < h; }
    double at(int x, int y) const { return t[std::size_t(y) * w + x]; }
    int cell_of_x(double wx) const { return int(std::floor((wx - origin_x) / resolution)); }
    int cell_of_y(double wy) const { return int(std::floor((wy - origin_y) / resolution)); }
    double center_of_x(int cx) const { return origin_x + (cx + 0.5) * resolution; }
    double center_of_y(int cy) const { return origin_y + (cy + 0.5) * resolution; }
};

struct NavMetrics {
    bool success = false;
    double spl = 0.0;          // in [0,1]; 0 whenever success is false
    double dts = 0.0;          // meters, >= 0
    double path_length = 0.0;  // meters actually travelled
};

namespace detail {

// Nearest cell (Euclidean, then lowest index) satisfying ok, searched over
// expanding Chebyshev rings; -1 when none within radius.
template <class Pred>
int nearest_cell_where(int w, int h, int x, int y, int radius, Pred ok) {
    if (x >= 0 && x < w && y >= 0 && y < h && ok(x, y)) return y * w + x;
    for (int r = 1; r <= radius; ++r) {
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (int ny = y - r; ny <= y + r; ++ny)
            for (int nx = x - r; nx <= x + r; ++nx) {
                if (std::max(std::abs(nx - x), std::abs(ny - y)) != r) continue;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h || !ok(nx, ny)) continue;
                double d = double(nx - x) * (nx - x) + double(ny - y) * (ny - y);
                if (d < bd) {
                    bd = d;
                    best = ny * w + nx;
                }
            }
        if (best >= 0) return best;
    }
    return -1;
}

inline void inflate_mask(std::vector<std::uint8_t>& blocked, int w, int h, int radius) {
    std::vector<std::pair<int, int>> disc;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) disc.emplace_back(dx, dy);
    std::vector<std::uint8_t> out(blocked.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!blocked[std::size_t(y) * w + x]) continue;
            for (auto [dx, dy] : disc) {
                int nx = x + dx, ny = y + dy;
                if (nx >= 0 && nx < w && ny >= 0 && ny < h) out[std::size_t(ny) * w + nx] = 1;
            }
        }
    blocked = std::move(out);
}

// 8-connected Dijkstra with sqrt(2) diagonals; diagonal moves require both
// orthogonal neighbors free (no corner cutting). Heap ties break on index.
inline std::vector<double> dijkstra8(const std::vector<std::uint8_t>& blocked, int w, int h,
                                     const std::vector<int>& sources, double step) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(std::size_t(w) * h, inf);
    using Node = std::pair<double, int>;
    std::priority_queue<Node, std::vector<Node>, std::greater<>> heap;
    for (int s : sources) {
        if (s < 0 || s >= w * h || blocked[s]) continue;
        dist[s] = 0.0;
        heap.emplace(0.0, s);
    }
    const double diag = step * std::numbers::sqrt2;
    while (!heap.empty()) {
        auto [dv, i] = heap.top();
        heap.pop();
        if (dv > dist[i]) continue;
        int x = i % w, y = i / w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                std::size_t ni = std::size_t(ny) * w + nx;
                if (blocked[ni]) continue;
                if (dx != 0 && dy != 0 &&
                    (blocked[std::size_t(y) * w + nx] || blocked[std::size_t(ny) * w + x]))
                    continue;
                double nd = dv + ((dx != 0 && dy != 0) ? diag : step);
                if (nd < dist[ni]) {
                    dist[ni] = nd;
                    heap.emplace(nd, int(ni));
                }
            }
    }
    return dist;
}

}  // namespace detail

// Planning occupancy: a map cell is blocked iff some obstacle cell lies
// within radius_cells of it (Euclidean; 2 cells covers the 0.10 m agent
// radius). Unexplored cells stay free so plans may run through them.
inline std::vector<std::uint8_t> inflate_obstacles(const MetricMap& map, int radius_cells = 2) {
    if (radius_cells < 0) throw std::invalid_argument("inflate_obstacles: negative radius");
    const int S = map.size();
    std::vector<std::uint8_t> blocked(std::size_t(S) * S, 0);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            if (map.grid().at(kObstacleChannel, x, y) > 0.5f)
                blocked[std::size_t(y) * S + x] = 1;
    detail::inflate_mask(blocked, S, S, radius_cells);
    return blocked;
}

// First-order fast marching over the blocked mask: each cell solves the
// upwind quadratic from its already-finalized axis neighbors, so the field
// obeys |grad T| = 1 with unit speed up to first-order error. Heap ties break
// on cell index; the result is platform-deterministic.
inline DistanceField fmm_field(const std::vector<std::uint8_t>& blocked, int w, int h,
                               const std::vector<int>& sources, double resolution = kMapResolution,
                               double origin_x = 0.0, double origin_y = 0.0) {
    if (w < 1 || h < 1 || blocked.size() != std::size_t(w) * h)
        throw std::invalid_argument("fmm_field: mask does not match dimensions");
    if (resolution <= 0) throw std::invalid_argument("fmm_field: resolution must be positive");
    if (sources.empty()) throw std::invalid_argument("fmm_field: no sources");
    const double inf = std::numeric_limits<double>::infinity();
    DistanceField f{w, h, resolution, origin_x, origin_y,
                    std::vector<double>(std::size_t(w) * h, inf)};
    std::vector<std::uint8_t> done(std::size_t(w) * h, 0);
    using Node = std::pair<double, int>;
    std::priority_queue<Node, std::vector<Node>, std::greater<>> heap;
    bool any = false;
    for (int s : sources) {
        if (s < 0 || s >= w * h) throw std::invalid_argument("fmm_field: source out of range");
        if (blocked[s]) continue;
        f.t[s] = 0.0;
        heap.emplace(0.0, s);
        any = true;
    }
    if (!any) throw std::invalid_argument("fmm_field: all sources inside obstacles");

    auto solve = [&](int x, int y) {
        double a = inf, b = inf;
        if (x > 0 && done[std::size_t(y) * w + x - 1]) a = f.at(x - 1, y);
        if (x + 1 < w && done[std::size_t(y) * w + x + 1]) a = std::min(a, f.at(x + 1, y));
        if (y > 0 && done[std::size_t(y - 1) * w + x]) b = f.at(x, y - 1);
        if (y + 1 < h && done[std::size_t(y + 1) * w + x]) b = std::min(b, f.at(x, y + 1));
        double lo = std::min(a, b), hi = std::max(a, b);
        if (hi == inf || hi - lo >= resolution) return lo + resolution;
        return 0.5 * (a + b + std::sqrt(2.0 * resolution * resolution - (a - b) * (a - b)));
    };
    while (!heap.empty()) {
        auto [tv, i] = heap.top();
        heap.pop();
        if (done[i] || tv > f.t[i]) continue;
        done[i] = 1;
        int x = i % w, y = i / w;
        for (int d = 0; d < 4; ++d) {
            int nx = x + kDx[d], ny = y + kDy[d];
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            std::size_t ni = std::size_t(ny) * w + nx;
            if (blocked[ni] || done[ni]) continue;
            double cand = solve(nx, ny);
            if (cand < f.t[ni]) {
                f.t[ni] = cand;
                heap.emplace(cand, int(ni));
            }
        }
    }
    return f;
}

struct Frontier {
    std::vector<int> cells;     // map cell indices, y * size + x, sorted
    double cx = 0.0, cy = 0.0;  // centroid in cell coordinates
};

// Frontier cells are explored, non-obstacle, and 4-adjacent to at least one
// in-bounds unexplored cell; grouped into 8-connected components. Non-obstacle
// is tested on the 3x3 neighborhood maximum of the obstacle channel: endpoint
// deposits quantize to +-1 cell, and without the halo a wall-interior cell
// dusted past 0.5 by the explored splat reads as a frontier that no scan can
// ever retire.
inline std::vector<Frontier> detect_frontiers(const MetricMap& map) {
    const int S = map.size();
    const GridStack& g = map.grid();
    auto near_obstacle = [&](int x, int y) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int nx = x + dx, ny = y + dy;
                if (nx >= 0 && nx < S && ny >= 0 && ny < S &&
                    g.at(kObstacleChannel, nx, ny) > 0.5f)
                    return true;
            }
        return false;
    };
    std::vector<std::uint8_t> is_f(std::size_t(S) * S, 0);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            if (g.at(kExploredChannel, x, y) <= 0.5f || near_obstacle(x, y)) continue;
            for (int d = 0; d < 4; ++d) {
                int nx = x + kDx[d], ny = y + kDy[d];
                if (nx >= 0 && nx < S && ny >= 0 && ny < S &&
                    g.at(kExploredChannel, nx, ny) <= 0.5f) {
                    is_f[std::size_t(y) * S + x] = 1;
                    break;
                }
            }
        }
    std::vector<Frontier> out;
    std::vector<std::uint8_t> seen(std::size_t(S) * S, 0);
    for (int y0 = 0; y0 < S; ++y0)
        for (int x0 = 0; x0 < S; ++x0) {
            std::size_t i0 = std::size_t(y0) * S + x0;
            if (!is_f[i0] || seen[i0]) continue;
            Frontier fr;
            std::vector<int> stack{int(i0)};
            seen[i0] = 1;
            while (!stack.empty()) {
                int i = stack.back();
                stack.pop_back();
                fr.cells.push_back(i);
                int x = i % S, y = i / S;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        int nx = x + dx, ny = y + dy;
                        if (nx < 0 || nx >= S || ny < 0 || ny >= S) continue;
                        std::size_t ni = std::size_t(ny) * S + nx;
                        if (is_f[ni] && !seen[ni]) {
                            seen[ni] = 1;
                            stack.push_back(int(ni));
                        }
                    }
            }
            std::sort(fr.cells.begin(), fr.cells.end());
            for (int i : fr.cells) {
                fr.cx += i % S;
                fr.cy += i / S;
            }
            fr.cx /= double(fr.cells.size());
            fr.cy /= double(fr.cells.size());
            out.push_back(std::move(fr));
        }
    return out;
}

// Geodesically nearest frontier cell from the pose, measured on the inflated
// map; frontier cells the inflation swallows are skipped. Empty when nothing
// is left to explore or every frontier is unreachable.
inline std::optional<std::pair<int, int>> nearest_frontier_goal(const MetricMap& map,
                                                                const ContinuousPose& pose) {
    auto frontiers = detect_frontiers(map);
    if (frontiers.empty()) return std::nullopt;
    const int S = map.size();
    int ax = map.cell_of_x(pose.x), ay = map.cell_of_y(pose.y);
    if (ax < 0 || ax >= S || ay < 0 || ay >= S)
        throw std::invalid_argument("nearest_frontier_goal: pose outside map");
    auto blocked = inflate_obstacles(map);
    int src = detail::nearest_cell_where(S, S, ax, ay, S,
                                         [&](int x, int y) { return !blocked[std::size_t(y) * S + x]; });
    if (src < 0) return std::nullopt;
    DistanceField f =
        fmm_field(blocked, S, S, {src}, map.resolution(), map.origin_x(), map.origin_y());
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> bc{-1, -1};
    for (const Frontier& fr : frontiers)
        for (int i : fr.cells)
            if (!blocked[i] && f.t[i] < best) {
                best = f.t[i];
                bc = {i % S, i / S};
            }
    if (bc.first < 0) return std::nullopt;
    return bc;
}

// Steepest-descent cell path: each step moves to the strictly smallest
// 8-neighbor, ending at a source (or a flat spot, which a fast-marching field
// does not produce away from sources).
inline std::vector<std::pair<int, int>> descent_path(const DistanceField& f, int x, int y) {
    if (!f.in_bounds(x, y)) throw std::invalid_argument("descent_path: start outside field");
    if (!std::isfinite(f.at(x, y)))
        throw std::runtime_error("descent_path: start is unreachable in this field");
    std::vector<std::pair<int, int>> path{{x, y}};
    while (path.size() < f.t.size()) {
        auto [cx, cy] = path.back();
        if (f.at(cx, cy) == 0.0) break;
        double best = f.at(cx, cy);
        int bx = -1, by = -1;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                int nx = cx + dx, ny = cy + dy;
                if (!f.in_bounds(nx, ny)) continue;
                if (f.at(nx, ny) < best) {
                    best = f.at(nx, ny);
                    bx = nx;
                    by = ny;
                }
            }
        if (bx < 0) break;
        path.emplace_back(bx, by);
    }
    return path;
}

struct Waypoint {
    double x = 0.0, y = 0.0;
};

// Farthest point along the descent path that still lies within d_s of the
// pose; the default radius is the planner's 1.25 m short-term horizon.
inline Waypoint short_term_goal(const DistanceField& f, const ContinuousPose& pose,
                                double d_s = 1.25) {
    int cx = f.cell_of_x(pose.x), cy = f.cell_of_y(pose.y);
    if (!f.in_bounds(cx, cy)) throw std::invalid_argument("short_term_goal: pose outside field");
    if (!std::isfinite(f.at(cx, cy)))
        throw std::runtime_error("short_term_goal: goal unreachable from pose");
    Waypoint wp{f.center_of_x(cx), f.center_of_y(cy)};
    for (auto [x, y] : descent_path(f, cx, cy)) {
        double wx = f.center_of_x(x), wy = f.center_of_y(y);
        if (std::hypot(wx - pose.x, wy - pose.y) <= d_s) wp = {wx, wy};
    }
    return wp;
}

inline constexpr double kBearingTolerance = 15.0 * M_PI / 180.0;

// Turn toward the waypoint (shorter arc) until the bearing error fits inside
// 1.5 turn steps, then drive.
inline Action local_controller(const ContinuousPose& pose, const Waypoint& wp) {
    double err = wrap_angle(std::atan2(wp.y - pose.y, wp.x - pose.x) - pose.theta);
    if (err > kBearingTolerance) return Action::TurnLeft;
    if (err < -kBearingTolerance) return Action::TurnRight;
    return Action::Forward;
}

enum class ExplorePolicy { Frontier, RandomGoal };

struct ExploreOptions {
    int rays = 360;            // panoramic scan resolution
    int replan_every = 25;     // long-term goal cadence
    double reach_dist = 0.25;  // long-term goal counts as reached
    int ignore_steps = 50;     // unreachable-frontier cool-off
    double d_s = 1.25;         // short-term goal radius
    // One margin cell beyond the 2-cell agent radius: with zero margin the
    // planned channel touches the contact constraint and the agent pins
    // itself on wall corners (waypoint lines clip them).
    int inflate = 3;
    int min_frontier = 8;  // preferred minimum frontier component size
    int stuck_after = 8;   // forward steps without motion before giving up a goal
    const DetectorModel* detector = nullptr;  // optional semantic corruption
};

struct ExplorationResult {
    // Best %Cov seen so far at each step: area can be reclassified when a
    // late obstacle mark lands on a cell once counted free, so the raw
    // instantaneous metric is not quite monotone; the curve records the
    // cumulative area known traversable instead.
    std::vector<double> coverage_curve;
    double final_coverage = 0.0;  // instantaneous %Cov of the final map
    MetricMap map;
    std::vector<ContinuousPose> trajectory;  // true pose at each step
    int replans = 0;
};

namespace detail {

inline ContinuousPose sample_start(const GridWorld& world, Rng& rng) {
    std::vector<std::pair<int, int>> free;
    for (int y = 0; y < world.height(); ++y)
        for (int x = 0; x < world.width(); ++x)
            if (world.free_cell(x, y)) free.emplace_back(x, y);
    if (free.empty()) throw std::invalid_argument("sample_start: world has no free cells");
    auto [x, y] = free[rng.uniform_int(free.size())];
    return {world.center_x(x), world.center_y(y), 0.0};
}

// Planning runs on the world-sized crop of the map; the 24 m canvas is
// mostly blank.
struct PlanWindow {
    int x0 = 0, y0 = 0, w = 0, h = 0;

    static PlanWindow of(const MetricMap& map, const GridWorld& world, int margin = 8) {
        double wx1 = world.width() * world.cell_size();
        double wy1 = world.height() * world.cell_size();
        int x0 = std::clamp(map.cell_of_x(0.0) - margin, 0, map.size() - 1);
        int y0 = std::clamp(map.cell_of_y(0.0) - margin, 0, map.size() - 1);
        int x1 = std::clamp(map.cell_of_x(wx1) + margin, 0, map.size() - 1);
        int y1 = std::clamp(map.cell_of_y(wy1) + margin, 0, map.size() - 1);
        return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    }
    bool contains(int mx, int my) const {
        return mx >= x0 && mx < x0 + w && my >= y0 && my < y0 + h;
    }
    int local(int mx, int my) const { return (my - y0) * w + (mx - x0); }
};

inline std::vector<std::uint8_t> crop_mask(const std::vector<std::uint8_t>& full, int S,
                                           const PlanWindow& win) {
    std::vector<std::uint8_t> out(std::size_t(win.w) * win.h);
    for (int y = 0; y < win.h; ++y)
        for (int x = 0; x < win.w; ++x)
            out[std::size_t(y) * win.w + x] = full[std::size_t(y + win.y0) * S + x + win.x0];
    return out;
}

// Straight segment stays on plannable (finite-field) cells. Cells within
// slack of the start cell pass unconditionally: the agent may legally stand
// inside the inflated band (inflation exceeds its physical radius).
inline bool segment_clear(const DistanceField& f, double x0, double y0, double x1, double y1,
                          int sx, int sy, int slack) {
    double len = std::hypot(x1 - x0, y1 - y0);
    int n = std::max(1, int(std::ceil(len / (f.resolution * 0.5))));
    for (int i = 0; i <= n; ++i) {
        double u = double(i) / n;
        int cx = f.cell_of_x(x0 + u * (x1 - x0)), cy = f.cell_of_y(y0 + u * (y1 - y0));
        if (!f.in_bounds(cx, cy)) return false;
        if (std::isfinite(f.at(cx, cy))) continue;
        if (std::max(std::abs(cx - sx), std::abs(cy - sy)) > slack) return false;
    }
    return true;
}

// The bearing controller drives a straight line, so the drive target is the
// farthest descent-path point within d_s that the pose can also reach along
// a segment of plannable cells; without the visibility cut the full-radius
// point routinely sits around a corner and the agent pins itself on it. The
// slack window is exactly the start-cell relaxation in use, so a mid-channel
// agent gets a strict check.
inline Waypoint los_waypoint(const DistanceField& f, int start_cell, const ContinuousPose& pose,
                             double d_s) {
    int px = f.cell_of_x(pose.x), py = f.cell_of_y(pose.y);
    int slack = std::max(std::abs(start_cell % f.w - px), std::abs(start_cell / f.w - py));
    Waypoint wp{f.center_of_x(start_cell % f.w), f.center_of_y(start_cell / f.w)};
    for (auto [x, y] : descent_path(f, start_cell % f.w, start_cell / f.w)) {
        double wx = f.center_of_x(x), wy = f.center_of_y(y);
        if (std::hypot(wx - pose.x, wy - pose.y) > d_s) continue;
        if (segment_clear(f, pose.x, pose.y, wx, wy, px, py, slack)) wp = {wx, wy};
    }
    return wp;
}

// Shared per-step drive: descend the goal field from the believed pose,
// relaxing the start by up to three cells when inflation swallows the
// agent's own cell. The waypoint is held (carrot-following) until reached or
// invalidated; recomputing it every step makes the descent path shift under
// the turning agent and the controller hunts left/right instead of driving.
// Falls back to a wander action when no plan applies.
struct Driver {
    std::optional<Waypoint> carrot;

    void reset() { carrot.reset(); }

    Action act(const std::optional<DistanceField>& field, const PlanWindow& win,
               const ContinuousPose& believed, double d_s, Rng& rng) {
        if (field) {
            int bx = field->cell_of_x(believed.x), by = field->cell_of_y(believed.y);
            int li = nearest_cell_where(win.w, win.h, bx, by, 3, [&](int x, int y) {
                return std::isfinite(field->at(x, y));
            });
            if (li >= 0) {
                if (carrot) {
                    double d = std::hypot(carrot->x - believed.x, carrot->y - believed.y);
                    if (d <= 0.26 || d > d_s ||
                        !segment_clear(*field, believed.x, believed.y, carrot->x, carrot->y, bx,
                                       by, std::max(std::abs(li % field->w - bx),
                                                    std::abs(li / field->w - by))))
                        carrot.reset();
                }
                if (!carrot) carrot = los_waypoint(*field, li, believed, d_s);
                if (std::hypot(carrot->x - believed.x, carrot->y - believed.y) > 1e-9)
                    return local_controller(believed, *carrot);
                carrot.reset();
            }
        }
        double u = rng.uniform();
        return u < 0.2 ? Action::TurnLeft : u < 0.4 ? Action::TurnRight : Action::Forward;
    }
};

// Chebyshev min-dilation (separable): out[c] = min of v over the (2r+1)²
// window. Extends reachability values onto cells the planner will relax.
inline std::vector<double> dilate_min(const std::vector<double>& v, int w, int h, int r) {
    std::vector<double> tmp(v.size()), out(v.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = std::numeric_limits<double>::infinity();
            for (int dx = -r; dx <= r; ++dx) {
                int nx = x + dx;
                if (nx >= 0 && nx < w) m = std::min(m, v[std::size_t(y) * w + nx]);
            }
            tmp[std::size_t(y) * w + x] = m;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = std::numeric_limits<double>::infinity();
            for (int dy = -r; dy <= r; ++dy) {
                int ny = y + dy;
                if (ny >= 0 && ny < h) m = std::min(m, tmp[std::size_t(ny) * w + x]);
            }
            out[std::size_t(y) * w + x] = m;
        }
    return out;
}

// Frontier goal selection with cool-offs. Wall rasterization leaves sliver
// components whose unexplored side is wall interior that no scan can ever
// clear, so selection prefers components of at least min_component cells and
// retires cells that persist after being reached or that pinned the agent.
// A candidate inside the inflated band is ranked by the field value of the
// nearest plannable cell within the same radius the goal gets relaxed by.
struct FrontierPlanner {
    PlanWindow win;
    int min_component = 8;
    int ignore_steps = 50;
    std::map<int, int> ignore_until;  // map cell -> expiry step

    std::optional<std::pair<int, int>> select(const MetricMap& map,
                                              const DistanceField& from_agent, int t) {
        auto frontiers = detect_frontiers(map);
        if (frontiers.empty()) return std::nullopt;
        const int S = map.size();
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> reach = dilate_min(from_agent.t, win.w, win.h, 3);
        double best_big = inf, best_small = inf;
        std::pair<int, int> big{-1, -1}, small{-1, -1};
        bool any_live = false;
        for (const Frontier& fr : frontiers) {
            bool is_big = int(fr.cells.size()) >= min_component;
            for (int i : fr.cells) {
                int mx = i % S, my = i / S;
                if (!win.contains(mx, my)) continue;
                auto it = ignore_until.find(i);
                if (it != ignore_until.end() && it->second > t) continue;
                any_live = true;
                double v = reach[win.local(mx, my)];
                if (is_big) {
                    if (v < best_big) {
                        best_big = v;
                        big = {mx, my};
                    }
                } else if (v < best_small) {
                    best_small = v;
                    small = {mx, my};
                }
            }
        }
        if (big.first >= 0 && best_big < inf) return big;
        if (small.first >= 0 && best_small < inf) return small;
        if (any_live)  // nothing reachable this round: cool everything off
            for (const Frontier& fr : frontiers) {
                bool live = false;
                for (int i : fr.cells) {
                    auto it = ignore_until.find(i);
                    if (it == ignore_until.end() || it->second <= t) {
                        live = true;
                        break;
                    }
                }
                if (live)
                    for (int i : fr.cells) ignore_until[i] = t + ignore_steps;
            }
        return std::nullopt;
    }

    // Real frontier cells near a visited goal dissolve on the scan taken
    // from it; whatever survives within a meter is junk (its unexplored
    // side is wall interior) and gets ignored for a while. The suppression
    // stays local so the far reaches of a large component remain live.
    void ignore_component(const MetricMap& map, std::pair<int, int> cell, int t,
                          int radius = 20) {
        const int S = map.size();
        int idx = cell.second * S + cell.first;
        for (const Frontier& fr : detect_frontiers(map))
            if (std::binary_search(fr.cells.begin(), fr.cells.end(), idx)) {
                for (int i : fr.cells) {
                    int dx = std::abs(i % S - cell.first), dy = std::abs(i / S - cell.second);
                    if (std::max(dx, dy) <= radius) ignore_until[i] = t + ignore_steps;
                }
                return;
            }
        ignore_until[idx] = t + ignore_steps;
    }
};

}  // namespace detail

// Coverage-maximization episode. Per step: scan, stamp into the map at the
// believed pose (ground truth when noiseless, dead-reckoned under noise),
// record %Cov, then follow the long-term goal. The goal is recomputed when
// reached or every replan_every steps; a round where every candidate
// frontier is unreachable puts those components on a cool-off list.
inline ExplorationResult run_exploration_episode(const GridWorld& world, ExplorePolicy policy,
                                                 int steps, PoseNoiseSampler* noise, Rng& rng,
                                                 const ExploreOptions& opt = {}) {
    if (steps < 1) throw std::invalid_argument("run_exploration_episode: steps must be >= 1");
    ContinuousPose truth = detail::sample_start(world, rng);
    ContinuousPose believed = truth;
    ExplorationResult res{{}, 0.0, MetricMap(0, truth.x, truth.y), {}, 0};
    const auto win = detail::PlanWindow::of(res.map, world);
    const double fov = 2.0 * M_PI * (opt.rays - 1) / opt.rays;
    const int S = res.map.size();
    const double wox = res.map.origin_x() + win.x0 * res.map.resolution();
    const double woy = res.map.origin_y() + win.y0 * res.map.resolution();

    detail::FrontierPlanner planner{win, opt.min_frontier, opt.ignore_steps, {}};
    detail::Driver driver;
    std::optional<std::pair<int, int>> goal;  // map cell
    std::optional<DistanceField> field;       // distance to goal over the window
    int last_plan = std::numeric_limits<int>::min();
    int stuck = 0;
    int recover = 0;  // pinned-escape: randomized turn burst, then back out
    Action recover_act = Action::TurnLeft;
    double best_cov = 0.0;

    for (int t = 0; t < steps; ++t) {
        DepthScan scan = raycast(world, truth, opt.rays, fov, kVisionRange);
        stamp(res.map, project_scan(scan, 0), believed);
        res.trajectory.push_back(truth);
        res.final_coverage = coverage(res.map, world).percent;
        best_cov = std::max(best_cov, res.final_coverage);
        res.coverage_curve.push_back(best_cov);

        if (recover > 0) {
            Action a = recover > 4 ? recover_act : Action::Forward;
            --recover;
            StepResult sr = continuous_step(world, truth, a, noise);
            truth = sr.true_pose;
            believed = noise ? apply_control(believed, sr.sensed_delta) : truth;
            continue;
        }

        bool reached = false;
        if (goal) {
            double gx = res.map.center_of_x(goal->first), gy = res.map.center_of_y(goal->second);
            if (std::hypot(believed.x - gx, believed.y - gy) <= opt.reach_dist) {
                reached = true;
                if (policy == ExplorePolicy::Frontier) planner.ignore_component(res.map, *goal, t);
            }
        }
        if (!goal || reached || t - last_plan >= opt.replan_every) {
            last_plan = t;
            ++res.replans;
            goal.reset();
            field.reset();
            driver.reset();
            stuck = 0;
            auto blocked = detail::crop_mask(inflate_obstacles(res.map, opt.inflate), S, win);
            if (policy == ExplorePolicy::Frontier) {
                int ax = res.map.cell_of_x(believed.x) - win.x0;
                int ay = res.map.cell_of_y(believed.y) - win.y0;
                int src = detail::nearest_cell_where(
                    win.w, win.h, ax, ay, std::max(win.w, win.h),
                    [&](int x, int y) { return !blocked[std::size_t(y) * win.w + x]; });
                if (src >= 0) {
                    DistanceField from_agent =
                        fmm_field(blocked, win.w, win.h, {src}, res.map.resolution(), wox, woy);
                    goal = planner.select(res.map, from_agent, t);
                }
            } else {
                std::vector<std::pair<int, int>> free;
                for (int y = 0; y < world.height(); ++y)
                    for (int x = 0; x < world.width(); ++x)
                        if (world.free_cell(x, y)) free.emplace_back(x, y);
                auto [gx, gy] = free[rng.uniform_int(free.size())];
                goal = {res.map.cell_of_x(world.center_x(gx)),
                        res.map.cell_of_y(world.center_y(gy))};
            }
            if (goal) {
                // frontier cells tucked into inner corners sit up to two
                // inflation bands deep in the blocked mask
                int li = detail::nearest_cell_where(
                    win.w, win.h, goal->first - win.x0, goal->second - win.y0,
                    2 * opt.inflate + 2,
                    [&](int x, int y) { return !blocked[std::size_t(y) * win.w + x]; });
                if (li >= 0)
                    field = fmm_field(blocked, win.w, win.h, {li}, res.map.resolution(), wox, woy);
                else
                    goal.reset();
            }
        }

        Action a = driver.act(field, win, believed, opt.d_s, rng);
        StepResult sr = continuous_step(world, truth, a, noise);
        double moved = std::hypot(sr.true_pose.x - truth.x, sr.true_pose.y - truth.y);
        truth = sr.true_pose;
        believed = noise ? apply_control(believed, sr.sensed_delta) : truth;

        if (goal && a == Action::Forward && moved < 0.01) {
            if (++stuck >= opt.stuck_after) {  // pinned against a wall or corner
                if (policy == ExplorePolicy::Frontier) planner.ignore_component(res.map, *goal, t);
                goal.reset();
                field.reset();
                driver.reset();
            driver.reset();
                stuck = 0;
                recover_act = rng.uniform() < 0.5 ? Action::TurnLeft : Action::TurnRight;
                recover = 4 + 7 + int(rng.uniform_int(5));
            }
        } else {
            stuck = 0;
        }
    }
    return res;
}

struct ObjectGoalResult {
    NavMetrics metrics;
    bool stopped = false;
    double shortest_path = 0.0;  // geodesic from start into the success region
    double goal_distance = 0.0;  // final distance to the nearest goal footprint
    ContinuousPose final_pose;
    std::vector<ContinuousPose> trajectory;
    MetricMap map;
};

namespace detail {

// Distance from a point to a world cell's footprint (0 inside).
inline double point_to_cell(const GridWorld& world, int cx, int cy, double px, double py) {
    const double cs = world.cell_size();
    double qx = std::clamp(px, cx * cs, (cx + 1) * cs);
    double qy = std::clamp(py, cy * cs, (cy + 1) * cs);
    return std::hypot(px - qx, py - qy);
}

}  // namespace detail

// Object-goal episode: frontier-explore until the goal category lands in the
// semantic map, then plan to its nearest believed cell and Stop within 1 m.
// Success asks the true final pose to lie within 1 m of a goal cell's
// footprint; dts = max(distance - 1, 0); spl is the standard
// success * L / max(L, path) with L the 8-connected raster geodesic from the
// start into the success region.
inline ObjectGoalResult run_objectgoal_episode(const GridWorld& world, int goal_category,
                                               int steps, PoseNoiseSampler* noise, Rng& rng,
                                               const ExploreOptions& opt = {}) {
    if (steps < 1) throw std::invalid_argument("run_objectgoal_episode: steps must be >= 1");
    if (goal_category < 1) throw std::invalid_argument("run_objectgoal_episode: bad category");
    std::vector<std::pair<int, int>> goal_cells, labeled;
    int num_semantic = goal_category;
    for (int y = 0; y < world.height(); ++y)
        for (int x = 0; x < world.width(); ++x) {
            int id = world.semantic(x, y);
            if (id == 0) continue;
            labeled.emplace_back(x, y);
            num_semantic = std::max(num_semantic, id);
            if (id == goal_category) goal_cells.emplace_back(x, y);
        }
    if (labeled.empty())
        throw std::invalid_argument("run_objectgoal_episode: world has no labeled cells");
    const auto& targets = goal_cells.empty() ? labeled : goal_cells;

    ContinuousPose truth = detail::sample_start(world, rng);
    ContinuousPose believed = truth;
    ObjectGoalResult res{{}, false, 0.0, 0.0, truth, {}, MetricMap(num_semantic, truth.x, truth.y)};
    const auto win = detail::PlanWindow::of(res.map, world);
    const double fov = 2.0 * M_PI * (opt.rays - 1) / opt.rays;
    const int S = res.map.size();
    const double success_radius = 1.0;

    {  // shortest-path oracle input: raster geodesic into the success region
        auto raster = world.raster(res.map.resolution());
        std::vector<std::uint8_t> blocked(raster.occ);
        detail::inflate_mask(blocked, raster.w, raster.h, opt.inflate);
        std::vector<int> sources;
        for (int y = 0; y < raster.h; ++y)
            for (int x = 0; x < raster.w; ++x) {
                if (blocked[std::size_t(y) * raster.w + x]) continue;
                double px = (x + 0.5) * raster.res, py = (y + 0.5) * raster.res;
                for (auto [gx, gy] : targets)
                    if (detail::point_to_cell(world, gx, gy, px, py) <= success_radius) {
                        sources.push_back(y * raster.w + x);
                        break;
                    }
            }
        auto dist = detail::dijkstra8(blocked, raster.w, raster.h, sources, raster.res);
        int sx = int(truth.x / raster.res), sy = int(truth.y / raster.res);
        res.shortest_path = dist[std::size_t(sy) * raster.w + sx];
    }

    detail::FrontierPlanner planner{win, opt.min_frontier, opt.ignore_steps, {}};
    detail::Driver driver;
    std::optional<std::pair<int, int>> goal;
    std::optional<DistanceField> field;
    int last_plan = std::numeric_limits<int>::min();
    bool goto_mode = false;
    int stuck = 0;
    int recover = 0;
    Action recover_act = Action::TurnLeft;
    const int goal_channel = semantic_channel(goal_category);
    const double wox = res.map.origin_x() + win.x0 * res.map.resolution();
    const double woy = res.map.origin_y() + win.y0 * res.map.resolution();

    for (int t = 0; t < steps; ++t) {
        DepthScan scan = raycast(world, truth, opt.rays, fov, kVisionRange);
        if (opt.detector) scan = corrupt_semantics(scan, *opt.detector, rng);
        stamp(res.map, project_scan(scan, num_semantic), believed);
        res.trajectory.push_back(truth);

        std::vector<int> believed_goals;  // window-local cells
        for (int y = 0; y < win.h; ++y)
            for (int x = 0; x < win.w; ++x)
                if (res.map.grid().at(goal_channel, x + win.x0, y + win.y0) > 0.5f)
                    believed_goals.push_back(y * win.w + x);

        if (!believed_goals.empty()) {
            double nearest = std::numeric_limits<double>::infinity();
            for (int li : believed_goals) {
                double gx = res.map.center_of_x(li % win.w + win.x0);
                double gy = res.map.center_of_y(li / win.w + win.y0);
                nearest = std::min(nearest, std::hypot(believed.x - gx, believed.y - gy));
            }
            if (nearest <= success_radius) {
                res.stopped = true;
                break;
            }
        }

        if (recover > 0) {
            Action a = recover > 4 ? recover_act : Action::Forward;
            --recover;
            StepResult sr = continuous_step(world, truth, a, noise);
            res.metrics.path_length +=
                std::hypot(sr.true_pose.x - truth.x, sr.true_pose.y - truth.y);
            truth = sr.true_pose;
            believed = noise ? apply_control(believed, sr.sensed_delta) : truth;
            continue;
        }

        bool reached = false;
        if (goal) {
            double gx = res.map.center_of_x(goal->first), gy = res.map.center_of_y(goal->second);
            if (std::hypot(believed.x - gx, believed.y - gy) <= opt.reach_dist) {
                reached = true;
                if (!goto_mode) planner.ignore_component(res.map, *goal, t);
            }
        }
        bool mode_flip = goto_mode != !believed_goals.empty();
        if (!goal || reached || mode_flip || t - last_plan >= opt.replan_every) {
            last_plan = t;
            goto_mode = !believed_goals.empty();
            goal.reset();
            field.reset();
            driver.reset();
            stuck = 0;
            auto blocked = detail::crop_mask(inflate_obstacles(res.map, opt.inflate), S, win);
            if (goto_mode) {
                std::vector<int> sources;
                for (int li : believed_goals) {
                    int s = detail::nearest_cell_where(
                        win.w, win.h, li % win.w, li / win.w, 2 * opt.inflate + 2,
                        [&](int x, int y) { return !blocked[std::size_t(y) * win.w + x]; });
                    if (s >= 0) sources.push_back(s);
                }
                std::sort(sources.begin(), sources.end());
                sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
                if (!sources.empty()) {
                    field = fmm_field(blocked, win.w, win.h, sources, res.map.resolution(), wox,
                                      woy);
                    goal = {sources[0] % win.w + win.x0, sources[0] / win.w + win.y0};
                }
            } else {
                int ax = res.map.cell_of_x(believed.x) - win.x0;
                int ay = res.map.cell_of_y(believed.y) - win.y0;
                int src = detail::nearest_cell_where(
                    win.w, win.h, ax, ay, std::max(win.w, win.h),
                    [&](int x, int y) { return !blocked[std::size_t(y) * win.w + x]; });
                if (src >= 0) {
                    DistanceField from_agent =
                        fmm_field(blocked, win.w, win.h, {src}, res.map.resolution(), wox, woy);
                    goal = planner.select(res.map, from_agent, t);
                    if (goal) {
                        int li = detail::nearest_cell_where(
                            win.w, win.h, goal->first - win.x0, goal->second - win.y0,
                            2 * opt.inflate + 2,
                            [&](int x, int y) { return !blocked[std::size_t(y) * win.w + x]; });
                        if (li >= 0)
                            field = fmm_field(blocked, win.w, win.h, {li}, res.map.resolution(),
                                              wox, woy);
                        else
                            goal.reset();
                    }
                }
            }
        }

        Action a = driver.act(field, win, believed, opt.d_s, rng);
        StepResult sr = continuous_step(world, truth, a, noise);
        double moved = std::hypot(sr.true_pose.x - truth.x, sr.true_pose.y - truth.y);
        res.metrics.path_length += moved;
        truth = sr.true_pose;
        believed = noise ? apply_control(believed, sr.sensed_delta) : truth;

        if (goal && a == Action::Forward && moved < 0.01) {
            if (++stuck >= opt.stuck_after) {
                if (!goto_mode) planner.ignore_component(res.map, *goal, t);
                goal.reset();
                field.reset();
                driver.reset();
            driver.reset();
                stuck = 0;
                recover_act = rng.uniform() < 0.5 ? Action::TurnLeft : Action::TurnRight;
                recover = 4 + 7 + int(rng.uniform_int(5));
            }
        } else {
            stuck = 0;
        }
    }

    res.final_pose = truth;
    double dist = std::numeric_limits<double>::infinity();
    for (auto [gx, gy] : targets)
        dist = std::min(dist, detail::point_to_cell(world, gx, gy, truth.x, truth.y));
    res.goal_distance = dist;
    res.metrics.success = res.stopped && !goal_cells.empty() && dist <= success_radius;
    res.metrics.dts = std::max(dist - success_radius, 0.0);
    if (res.metrics.success) {
        double L = res.shortest_path;
        res.metrics.spl =
            L <= 0.0 ? 1.0 : L / std::max(L, res.metrics.path_length);
    }
    return res;
}

}  // namespace navlab
