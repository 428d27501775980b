#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/rng.hpp"

namespace navlab {

inline constexpr int kOrientations = 4;
inline constexpr double kAgentRadius = 0.10;            // meters
inline constexpr double kForwardStep = 0.25;            // meters
inline constexpr double kTurnStep = 10.0 * M_PI / 180;  // radians

enum class Action : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

inline const char* action_name(Action a) {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::TurnLeft: return "turn_left";
        case Action::TurnRight: return "turn_right";
        default: return "stop";
    }
}

// o: 0=E, 1=N, 2=W, 3=S, counter-clockwise; theta = o * pi/2.
struct DiscretePose {
    int x = 0, y = 0, o = 0;
    bool operator==(const DiscretePose&) const = default;
};

struct ContinuousPose {
    double x = 0, y = 0, theta = 0;  // meters, radians CCW from +x
};

struct Vec3 {
    double x = 0, y = 0, o = 0;
    bool operator==(const Vec3&) const = default;
};

// Normalizes to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, 2 * M_PI);
    if (a > M_PI) a -= 2 * M_PI;
    if (a <= -M_PI) a += 2 * M_PI;
    return a;
}

inline constexpr std::array<int, 4> kDx = {1, 0, -1, 0};
inline constexpr std::array<int, 4> kDy = {0, 1, 0, -1};

struct Ray {
    double bearing = 0;  // relative to agent heading
    double range = 0;
    int semantic = 0;  // 0 = none
    bool hit = false;
    double normal = M_PI;  // outward normal of the struck face, heading-relative
};

struct DepthScan {
    std::vector<Ray> rays;
    double max_range = 0;
};

// Shortest round-trip decimal form; keeps file formats exact and stable.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

// Binary obstacle grid with per-cell semantic category. y grows to the
// north so that theta = o * pi/2 holds in both discrete and continuous
// frames. Immutable after construction; safe to share across workers.
class GridWorld {
public:
    GridWorld(int width, int height, double cell_size, std::vector<std::uint8_t> obstacle,
              std::vector<std::uint8_t> semantic)
        : width_(width),
          height_(height),
          cell_size_(cell_size),
          obstacle_(std::move(obstacle)),
          semantic_(std::move(semantic)) {
        if (width_ < 3 || height_ < 3) throw std::invalid_argument("world: dimensions too small");
        if (cell_size_ <= 0) throw std::invalid_argument("world: cell_size must be positive");
        if (obstacle_.size() != static_cast<std::size_t>(width_ * height_) ||
            semantic_.size() != obstacle_.size())
            throw std::invalid_argument("world: grid size mismatch");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    double cell_size() const { return cell_size_; }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }
    bool obstacle(int x, int y) const {
        return !in_bounds(x, y) || obstacle_[std::size_t(y) * width_ + x] != 0;
    }
    bool free_cell(int x, int y) const { return !obstacle(x, y); }
    int semantic(int x, int y) const {
        return in_bounds(x, y) ? semantic_[std::size_t(y) * width_ + x] : 0;
    }

    int free_count() const {
        int n = 0;
        for (auto c : obstacle_) n += (c == 0);
        return n;
    }

    // Cell containing a continuous point.
    int cell_x(double x) const { return static_cast<int>(std::floor(x / cell_size_)); }
    int cell_y(double y) const { return static_cast<int>(std::floor(y / cell_size_)); }
    double center_x(int x) const { return (x + 0.5) * cell_size_; }
    double center_y(int y) const { return (y + 0.5) * cell_size_; }

    void set_semantic(int x, int y, int id) {
        if (!obstacle(x, y)) throw std::invalid_argument("semantic id only on obstacle cells");
        if (id < 0 || id > 26) throw std::invalid_argument("semantic id out of range");
        semantic_[std::size_t(y) * width_ + x] = static_cast<std::uint8_t>(id);
    }

    // Validates the documented invariants: closed boundary, connected free
    // space, semantics only on obstacles.
    void validate() const {
        for (int x = 0; x < width_; ++x)
            if (!obstacle(x, 0) || !obstacle(x, height_ - 1))
                throw std::runtime_error("world: boundary row not closed");
        for (int y = 0; y < height_; ++y)
            if (!obstacle(0, y) || !obstacle(width_ - 1, y))
                throw std::runtime_error("world: boundary column not closed");
        for (int y = 0; y < height_; ++y)
            for (int x = 0; x < width_; ++x)
                if (free_cell(x, y) && semantic(x, y) != 0)
                    throw std::runtime_error("world: semantic id on free cell");
        int start = -1;
        for (std::size_t i = 0; i < obstacle_.size() && start < 0; ++i)
            if (obstacle_[i] == 0) start = static_cast<int>(i);
        if (start < 0) throw std::runtime_error("world: no free cell");
        std::vector<std::uint8_t> seen(obstacle_.size(), 0);
        std::vector<int> stack{start};
        seen[start] = 1;
        int reached = 0;
        while (!stack.empty()) {
            int c = stack.back();
            stack.pop_back();
            ++reached;
            int x = c % width_, y = c / width_;
            for (int d = 0; d < 4; ++d) {
                int nx = x + kDx[d], ny = y + kDy[d];
                if (free_cell(nx, ny) && !seen[std::size_t(ny) * width_ + nx]) {
                    seen[std::size_t(ny) * width_ + nx] = 1;
                    stack.push_back(ny * width_ + nx);
                }
            }
        }
        if (reached != free_count()) throw std::runtime_error("world: free space disconnected");
    }

    // Occupancy resampled at a finer resolution (res must divide cell_size
    // in practice; cell membership is decided at subcell centers).
    struct Raster {
        int w = 0, h = 0;
        double res = 0;
        std::vector<std::uint8_t> occ;
        bool obstacle(int x, int y) const {
            return x < 0 || x >= w || y < 0 || y >= h || occ[std::size_t(y) * w + x] != 0;
        }
    };

    Raster raster(double res) const {
        Raster r;
        r.res = res;
        r.w = static_cast<int>(std::lround(width_ * cell_size_ / res));
        r.h = static_cast<int>(std::lround(height_ * cell_size_ / res));
        r.occ.assign(std::size_t(r.w) * r.h, 0);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) {
                double px = (x + 0.5) * res, py = (y + 0.5) * res;
                if (obstacle(cell_x(px), cell_y(py))) r.occ[std::size_t(y) * r.w + x] = 1;
            }
        return r;
    }

private:
    int width_, height_;
    double cell_size_;
    std::vector<std::uint8_t> obstacle_;
    std::vector<std::uint8_t> semantic_;
};

// --- Maze generation -------------------------------------------------------

// Perfect maze on the odd lattice: passage cells at odd coordinates, walls
// one cell thick, boundary closed. Kruskal over the lattice edges with a
// platform-stable shuffle, so a seed pins the maze everywhere.
inline GridWorld generate_maze(int width, int height, std::uint64_t seed, double cell_size = 1.0) {
    if (width < 5 || height < 5 || width % 2 == 0 || height % 2 == 0)
        throw std::invalid_argument("generate_maze: dimensions must be odd and >= 5");
    const int lw = (width - 1) / 2, lh = (height - 1) / 2;

    struct Edge {
        int a, b;   // lattice cell indices
        int wx, wy; // wall cell between them
    };
    std::vector<Edge> edges;
    for (int j = 0; j < lh; ++j)
        for (int i = 0; i < lw; ++i) {
            if (i + 1 < lw) edges.push_back({j * lw + i, j * lw + i + 1, 2 * i + 2, 2 * j + 1});
            if (j + 1 < lh) edges.push_back({j * lw + i, (j + 1) * lw + i, 2 * i + 1, 2 * j + 2});
        }
    Rng rng(seed);
    rng.shuffle(edges);

    std::vector<int> parent(std::size_t(lw) * lh);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };

    std::vector<std::uint8_t> obstacle(std::size_t(width) * height, 1);
    for (int j = 0; j < lh; ++j)
        for (int i = 0; i < lw; ++i) obstacle[std::size_t(2 * j + 1) * width + 2 * i + 1] = 0;
    for (const Edge& e : edges) {
        int ra = find(e.a), rb = find(e.b);
        if (ra == rb) continue;
        parent[ra] = rb;
        obstacle[std::size_t(e.wy) * width + e.wx] = 0;
    }
    return GridWorld(width, height, cell_size, std::move(obstacle),
                     std::vector<std::uint8_t>(std::size_t(width) * height, 0));
}

// Labels `per_category` exposed wall cells (walls with at least one free
// 4-neighbor, so they are observable) for each category 1..num_categories.
inline void label_random_walls(GridWorld& world, int num_categories, int per_category, Rng& rng) {
    if (num_categories < 1 || num_categories > 26)
        throw std::invalid_argument("label_random_walls: categories must be in 1..26");
    if (per_category < 1) throw std::invalid_argument("label_random_walls: per_category must be >= 1");
    std::vector<std::pair<int, int>> candidates;
    for (int y = 0; y < world.height(); ++y)
        for (int x = 0; x < world.width(); ++x) {
            if (!world.obstacle(x, y) || world.semantic(x, y) != 0) continue;
            for (int d = 0; d < 4; ++d)
                if (world.free_cell(x + kDx[d], y + kDy[d])) {
                    candidates.emplace_back(x, y);
                    break;
                }
        }
    if (candidates.size() < std::size_t(num_categories) * per_category)
        throw std::invalid_argument("label_random_walls: not enough exposed walls");
    rng.shuffle(candidates);
    std::size_t k = 0;
    for (int c = 1; c <= num_categories; ++c)
        for (int i = 0; i < per_category; ++i, ++k)
            world.set_semantic(candidates[k].first, candidates[k].second, c);
}

// --- Discrete kinematics and sensing ---------------------------------------

inline DiscretePose discrete_step(const GridWorld& world, const DiscretePose& pose, Action action) {
    DiscretePose next = pose;
    switch (action) {
        case Action::TurnLeft: next.o = (pose.o + 1) % kOrientations; break;
        case Action::TurnRight: next.o = (pose.o + 3) % kOrientations; break;
        case Action::Forward: {
            int nx = pose.x + kDx[pose.o], ny = pose.y + kDy[pose.o];
            if (world.free_cell(nx, ny)) {
                next.x = nx;
                next.y = ny;
            }  // blocked forward is a legal no-op (collision)
            break;
        }
        case Action::Stop: break;
    }
    return next;
}

// Count of consecutive free cells ahead; everything behind the first
// obstacle reads as zero.
inline int depth_observation(const GridWorld& world, const DiscretePose& pose) {
    int d = 0, x = pose.x + kDx[pose.o], y = pose.y + kDy[pose.o];
    while (world.free_cell(x, y)) {
        ++d;
        x += kDx[pose.o];
        y += kDy[pose.o];
    }
    return d;
}

// Depth of every (o, y, x) state, filled with four suffix sweeps.
struct DepthTable {
    int width = 0, height = 0;
    std::vector<std::int16_t> d;  // (o*height + y)*width + x

    explicit DepthTable(const GridWorld& w) : width(w.width()), height(w.height()) {
        d.assign(std::size_t(kOrientations) * width * height, 0);
        for (int o = 0; o < kOrientations; ++o)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    // sweep order makes the cell ahead already final
                    int sx = (o == 0) ? width - 1 - x : x;
                    int sy = (o == 1) ? height - 1 - y : y;
                    if (world_free(w, sx, sy)) {
                        int ax = sx + kDx[o], ay = sy + kDy[o];
                        at(o, sx, sy) = w.free_cell(ax, ay)
                                            ? static_cast<std::int16_t>(at(o, ax, ay) + 1)
                                            : std::int16_t{0};
                    }
                }
    }
    std::int16_t& at(int o, int x, int y) {
        return d[(std::size_t(o) * height + y) * width + x];
    }
    std::int16_t at(int o, int x, int y) const {
        return d[(std::size_t(o) * height + y) * width + x];
    }

private:
    static bool world_free(const GridWorld& w, int x, int y) { return w.free_cell(x, y); }
};

// --- Continuous kinematics and sensing --------------------------------------

// DDA voxel traversal; hit range is the distance to the entry face of the
// obstacle cell.
inline DepthScan raycast(const GridWorld& world, const ContinuousPose& pose, int n_rays,
                         double fov, double max_range) {
    if (n_rays < 1) throw std::invalid_argument("raycast: n_rays must be >= 1");
    if (max_range <= 0) throw std::invalid_argument("raycast: max_range must be positive");
    if (world.obstacle(world.cell_x(pose.x), world.cell_y(pose.y)))
        throw std::invalid_argument("raycast: pose inside an obstacle cell");

    DepthScan scan;
    scan.max_range = max_range;
    scan.rays.reserve(n_rays);
    const double cs = world.cell_size();
    for (int i = 0; i < n_rays; ++i) {
        double rel = (n_rays == 1) ? 0.0 : fov * (double(i) / (n_rays - 1) - 0.5);
        double ang = pose.theta + rel;
        double dx = std::cos(ang), dy = std::sin(ang);
        int cx = world.cell_x(pose.x), cy = world.cell_y(pose.y);
        int step_x = dx > 0 ? 1 : -1, step_y = dy > 0 ? 1 : -1;
        double t_max_x = (dx == 0) ? INFINITY
                                   : ((dx > 0 ? (cx + 1) * cs - pose.x : pose.x - cx * cs) /
                                      std::abs(dx));
        double t_max_y = (dy == 0) ? INFINITY
                                   : ((dy > 0 ? (cy + 1) * cs - pose.y : pose.y - cy * cs) /
                                      std::abs(dy));
        double t_dx = (dx == 0) ? INFINITY : cs / std::abs(dx);
        double t_dy = (dy == 0) ? INFINITY : cs / std::abs(dy);

        Ray ray{rel, max_range, 0, false};
        for (;;) {
            double t, face_normal;
            if (t_max_x < t_max_y) {
                t = t_max_x;
                t_max_x += t_dx;
                cx += step_x;
                face_normal = step_x > 0 ? M_PI : 0.0;
            } else {
                t = t_max_y;
                t_max_y += t_dy;
                cy += step_y;
                face_normal = step_y > 0 ? -M_PI / 2 : M_PI / 2;
            }
            if (t > max_range) break;
            if (world.obstacle(cx, cy)) {
                ray.range = t;
                ray.semantic = world.semantic(cx, cy);
                ray.hit = true;
                ray.normal = wrap_angle(face_normal - pose.theta);
                break;
            }
        }
        scan.rays.push_back(ray);
    }
    return scan;
}

// Agent-frame translation, then rotation, then angle normalization.
inline ContinuousPose apply_control(const ContinuousPose& pose, const Vec3& du) {
    double c = std::cos(pose.theta), s = std::sin(pose.theta);
    return {pose.x + c * du.x - s * du.y, pose.y + s * du.x + c * du.y,
            wrap_angle(pose.theta + du.o)};
}

inline Vec3 control_command(Action a) {
    switch (a) {
        case Action::Forward: return {kForwardStep, 0, 0};
        case Action::TurnLeft: return {0, 0, kTurnStep};
        case Action::TurnRight: return {0, 0, -kTurnStep};
        default: return {0, 0, 0};
    }
}

// True iff a disc of the given radius centered at (px, py) overlaps no
// obstacle cell.
inline bool disc_free(const GridWorld& world, double px, double py, double radius) {
    const double cs = world.cell_size();
    int x0 = world.cell_x(px - radius), x1 = world.cell_x(px + radius);
    int y0 = world.cell_y(py - radius), y1 = world.cell_y(py + radius);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (!world.obstacle(x, y)) continue;
            double cx = std::clamp(px, x * cs, (x + 1) * cs);
            double cy = std::clamp(py, y * cs, (y + 1) * cs);
            double dx = px - cx, dy = py - cy;
            if (dx * dx + dy * dy < radius * radius) return false;
        }
    return true;
}

// Per-action pose-noise source; the noise module provides the GMM-backed
// implementation. Absent sampler means exact motion.
struct PoseNoiseSampler {
    virtual ~PoseNoiseSampler() = default;
    virtual Vec3 actuation(Action a) = 0;
    virtual Vec3 sensor(Action a) = 0;
};

struct StepResult {
    ContinuousPose true_pose;
    Vec3 sensed_delta;  // previous agent frame
};

// Applies the control plus actuation noise, sweeping the agent disc and
// truncating translation at first contact; turns never collide. The sensed
// delta is the realized motion in the previous agent frame plus sensor noise.
inline StepResult continuous_step(const GridWorld& world, const ContinuousPose& pose, Action action,
                                  PoseNoiseSampler* noise = nullptr) {
    if (action == Action::Stop) throw std::invalid_argument("continuous_step: Stop is not a motion");
    Vec3 du = control_command(action);
    if (noise) {
        Vec3 e = noise->actuation(action);
        du.x += e.x;
        du.y += e.y;
        du.o += e.o;
    }
    double c = std::cos(pose.theta), s = std::sin(pose.theta);
    double wx = c * du.x - s * du.y, wy = s * du.x + c * du.y;  // world-frame translation
    double dist = std::hypot(wx, wy);

    double t_free = 1.0;
    if (dist > 0) {
        const double step = world.cell_size() / 8.0;
        int n = std::max(1, static_cast<int>(std::ceil(dist / step)));
        double t_prev = 0.0;
        bool collided = false;
        for (int i = 1; i <= n; ++i) {
            double t = double(i) / n;
            if (!disc_free(world, pose.x + t * wx, pose.y + t * wy, kAgentRadius)) {
                double lo = t_prev, hi = t;
                for (int k = 0; k < 40; ++k) {
                    double mid = 0.5 * (lo + hi);
                    if (disc_free(world, pose.x + mid * wx, pose.y + mid * wy, kAgentRadius))
                        lo = mid;
                    else
                        hi = mid;
                }
                t_free = lo;
                collided = true;
                break;
            }
            t_prev = t;
        }
        if (!collided) t_free = 1.0;
    }

    ContinuousPose out{pose.x + t_free * wx, pose.y + t_free * wy, wrap_angle(pose.theta + du.o)};
    double rx = out.x - pose.x, ry = out.y - pose.y;
    Vec3 sensed{c * rx + s * ry, -s * rx + c * ry, wrap_angle(out.theta - pose.theta)};
    if (noise) {
        Vec3 e = noise->sensor(action);
        sensed.x += e.x;
        sensed.y += e.y;
        sensed.o += e.o;
    }
    return {out, sensed};
}

// --- World file format ------------------------------------------------------
// Header "W H cell_size", then H rows of W characters, north row first:
// '#' obstacle, '.' free, 'A'-'Z' obstacle with semantic id 1-26.

inline void save_world(const GridWorld& world, std::ostream& os) {
    os << world.width() << ' ' << world.height() << ' ' << fmt_double(world.cell_size()) << '\n';
    for (int y = world.height() - 1; y >= 0; --y) {
        for (int x = 0; x < world.width(); ++x) {
            if (!world.obstacle(x, y))
                os << '.';
            else if (world.semantic(x, y) > 0)
                os << static_cast<char>('A' + world.semantic(x, y) - 1);
            else
                os << '#';
        }
        os << '\n';
    }
}

inline void save_world(const GridWorld& world, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_world: cannot open " + path);
    save_world(world, f);
}

inline GridWorld load_world(std::istream& is) {
    int w = 0, h = 0;
    double cs = 0;
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("world file: missing header");
    {
        std::istringstream hs(header);
        if (!(hs >> w >> h >> cs)) throw std::runtime_error("world file: bad header '" + header + "'");
    }
    if (w < 3 || h < 3 || cs <= 0) throw std::runtime_error("world file: invalid header values");
    std::vector<std::uint8_t> obstacle(std::size_t(w) * h, 1), semantic(std::size_t(w) * h, 0);
    for (int row = 0; row < h; ++row) {
        std::string line;
        if (!std::getline(is, line)) throw std::runtime_error("world file: truncated rows");
        if (static_cast<int>(line.size()) != w)
            throw std::runtime_error("world file: row " + std::to_string(row) + " has wrong width");
        int y = h - 1 - row;
        for (int x = 0; x < w; ++x) {
            char ch = line[x];
            std::size_t i = std::size_t(y) * w + x;
            if (ch == '.')
                obstacle[i] = 0;
            else if (ch == '#')
                obstacle[i] = 1;
            else if (ch >= 'A' && ch <= 'Z') {
                obstacle[i] = 1;
                semantic[i] = static_cast<std::uint8_t>(ch - 'A' + 1);
            } else
                throw std::runtime_error(std::string("world file: bad cell character '") + ch + "'");
        }
    }
    GridWorld world(w, h, cs, std::move(obstacle), std::move(semantic));
    world.validate();
    return world;
}

inline GridWorld load_world(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_world: cannot open " + path);
    return load_world(f);
}

// Test/demo helper: world from ASCII art rows (north row first).
inline GridWorld world_from_ascii(const std::vector<std::string>& rows, double cell_size = 1.0) {
    std::ostringstream os;
    os << rows[0].size() << ' ' << rows.size() << ' ' << fmt_double(cell_size) << '\n';
    for (const auto& r : rows) os << r << '\n';
    std::istringstream is(os.str());
    return load_world(is);
}

}  // namespace navlab
