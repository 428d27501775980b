#pragma once
// Metric occupancy + semantic mapping from depth scans. The pipeline is
// project_scan (ray rasterization into an egocentric grid), spatial_transform
// (rigid motion into the geocentric map with bilinear splatting), and
// aggregate (channel-wise max pooling). The 3D voxel height-summing of the
// source systems collapses to direct ray rasterization in a planar world.
//
// Channel order everywhere: 0 obstacle, 1 explored, 2..C+1 semantic ids 1..C.
// All entries live in [0,1]; semantic mass never appears where explored is 0.

#include <navlab/rng.hpp>
#include <navlab/world.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace navlab {

inline constexpr double kMapResolution = 0.05;  // meters per map cell
inline constexpr int kMapSize = 480;            // cells per side (24 m)
inline constexpr double kVisionRange = 3.0;     // meters
inline constexpr double kLambdaSemanticCuriosity = 2.5e-3;

inline constexpr int kObstacleChannel = 0;
inline constexpr int kExploredChannel = 1;
inline constexpr int semantic_channel(int id) { return 1 + id; }  // id in 1..C

// K channels of S×S float cells, channel-major.
struct GridStack {
    int size = 0;
    int channels = 0;
    std::vector<float> data;

    GridStack() = default;
    GridStack(int size_, int channels_)
        : size(size_), channels(channels_), data(std::size_t(channels_) * size_ * size_, 0.0f) {
        if (size_ < 1 || channels_ < 1) throw std::invalid_argument("grid: bad dimensions");
    }

    float& at(int k, int x, int y) { return data[(std::size_t(k) * size + y) * size + x]; }
    float at(int k, int x, int y) const { return data[(std::size_t(k) * size + y) * size + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < size && y >= 0 && y < size; }

    bool operator==(const GridStack&) const = default;
};

// Geocentric map. The construction point sits on the shared corner of the
// four center cells: when the agent starts on a world-cell center, map cell
// boundaries coincide with the world lattice, so no cell straddles a wall
// face (a straddling skin otherwise collects obstacle weight and erodes the
// coverage metric).
class MetricMap {
public:
    MetricMap(int num_semantic, double center_x, double center_y, int size = kMapSize,
              double resolution = kMapResolution)
        : grid_(size, num_semantic + 2),
          resolution_(resolution),
          origin_x_(center_x - (size / 2) * resolution),
          origin_y_(center_y - (size / 2) * resolution) {
        if (num_semantic < 0) throw std::invalid_argument("map: num_semantic must be >= 0");
        if (resolution <= 0) throw std::invalid_argument("map: resolution must be positive");
    }

    GridStack& grid() { return grid_; }
    const GridStack& grid() const { return grid_; }
    int size() const { return grid_.size; }
    int num_semantic() const { return grid_.channels - 2; }
    double resolution() const { return resolution_; }

    // world <-> cell; cell centers sit at origin + (i + 0.5) * res
    int cell_of_x(double wx) const { return int(std::floor((wx - origin_x_) / resolution_)); }
    int cell_of_y(double wy) const { return int(std::floor((wy - origin_y_) / resolution_)); }
    double center_of_x(int cx) const { return origin_x_ + (cx + 0.5) * resolution_; }
    double center_of_y(int cy) const { return origin_y_ + (cy + 0.5) * resolution_; }
    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }
    bool contains(double wx, double wy) const {
        return grid_.in_bounds(cell_of_x(wx), cell_of_y(wy));
    }

    bool same_geometry(const MetricMap& o) const {
        return grid_.size == o.grid_.size && grid_.channels == o.grid_.channels &&
               resolution_ == o.resolution_ && origin_x_ == o.origin_x_ &&
               origin_y_ == o.origin_y_;
    }

    bool operator==(const MetricMap&) const = default;

private:
    GridStack grid_;
    double resolution_;
    double origin_x_, origin_y_;  // world coordinates of the (0,0) cell corner
};

// Agent-frame projection: the agent sits at the center cell facing +x, with
// vision_range of cells on every side (so any scan FOV fits).
struct EgoProjection {
    GridStack grid;
    double resolution = kMapResolution;
    int center = 0;  // agent cell index on both axes

    int num_semantic() const { return grid.channels - 2; }
};

// Simulated detector: a hit's true category is dropped with miss_rate, else
// resampled from its confusion row.
struct DetectorModel {
    std::vector<std::vector<double>> confusion;  // row = true id - 1
    double miss_rate = 0.0;

    void validate() const {
        if (confusion.empty()) throw std::invalid_argument("detector: empty confusion matrix");
        for (const auto& row : confusion) {
            if (row.size() != confusion.size())
                throw std::invalid_argument("detector: confusion matrix not square");
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0) throw std::invalid_argument("detector: negative confusion entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("detector: confusion row must sum to 1");
        }
        if (!(miss_rate >= 0.0 && miss_rate < 1.0))
            throw std::invalid_argument("detector: miss_rate must be in [0,1)");
    }

    static DetectorModel identity(int num_categories) {
        DetectorModel d;
        d.confusion.assign(num_categories, std::vector<double>(num_categories, 0.0));
        for (int i = 0; i < num_categories; ++i) d.confusion[i][i] = 1.0;
        return d;
    }
};

inline DepthScan corrupt_semantics(const DepthScan& scan, const DetectorModel& detector,
                                   Rng& rng) {
    detector.validate();
    DepthScan out = scan;
    for (Ray& ray : out.rays) {
        if (!ray.hit || ray.semantic <= 0) continue;
        if (ray.semantic > static_cast<int>(detector.confusion.size()))
            throw std::invalid_argument("corrupt_semantics: id exceeds confusion matrix");
        if (rng.uniform() < detector.miss_rate) {
            ray.semantic = 0;
            continue;
        }
        const auto& row = detector.confusion[ray.semantic - 1];
        double u = rng.uniform(), acc = 0.0;
        int pick = static_cast<int>(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) {
            acc += row[c];
            if (u < acc) {
                pick = static_cast<int>(c) + 1;
                break;
            }
        }
        ray.semantic = pick;
    }
    return out;
}

// Rasterizes one scan into the agent frame. Cells sampled along each ray up
// to the hit face are explored; the hit cell — the face point pushed one cell
// inward along the struck face's normal, so grazing rays cannot round the
// mark back onto the free side — is obstacle + explored and carries the
// reported semantic id.
inline EgoProjection project_scan(const DepthScan& scan, int num_semantic,
                                  double vision_range = kVisionRange,
                                  double resolution = kMapResolution) {
    if (scan.rays.empty()) throw std::invalid_argument("project_scan: empty scan");
    if (num_semantic < 0) throw std::invalid_argument("project_scan: num_semantic must be >= 0");
    const int n = static_cast<int>(std::lround(vision_range / resolution));
    EgoProjection ego;
    ego.grid = GridStack(2 * n + 1, num_semantic + 2);
    ego.resolution = resolution;
    ego.center = n;

    auto cell = [&](double v) { return n + static_cast<int>(std::lround(v / resolution)); };
    auto mark = [&](int k, double x, double y) {
        int cx = cell(x), cy = cell(y);
        if (ego.grid.in_bounds(cx, cy)) ego.grid.at(k, cx, cy) = 1.0f;
    };

    for (const Ray& ray : scan.rays) {
        double dx = std::cos(ray.bearing), dy = std::sin(ray.bearing);
        double reach = std::min(ray.range, vision_range);
        bool hit = ray.hit && ray.range <= vision_range;
        // free-space samples stop short of the hit face
        double t_free = hit ? reach - 1e-9 : reach;
        const double step = resolution / 2.0;
        int samples = std::max(1, static_cast<int>(std::ceil(t_free / step)));
        for (int i = 0; i <= samples; ++i) {
            double t = std::min(t_free, i * step);
            mark(kExploredChannel, t * dx, t * dy);
        }
        if (hit) {
            double hx = reach * dx - resolution * std::cos(ray.normal);
            double hy = reach * dy - resolution * std::sin(ray.normal);
            mark(kObstacleChannel, hx, hy);
            mark(kExploredChannel, hx, hy);
            if (ray.semantic > 0) {
                if (ray.semantic > num_semantic)
                    throw std::invalid_argument("project_scan: semantic id exceeds channel count");
                mark(semantic_channel(ray.semantic), hx, hy);
            }
        }
    }
    return ego;
}

namespace detail {

// Splats every ego cell into dst under the agent pose; (x0, y0) is dst's
// offset in map cell coordinates, subtracted only after flooring so the
// fused window path and the full-map path compute identical weights and
// produce bit-identical grids. Accumulation order is (k, y, x). The explored
// channel is deposited bilinearly; endpoint-anchored channels (obstacle,
// semantics) go to the single nearest cell, because the 2x2 stencil bleeds
// wall weight onto the free side of a face under rotation.
inline void splat_ego(const EgoProjection& ego, const ContinuousPose& pose, const MetricMap& geom,
                      GridStack& dst, int x0, int y0) {
    const double c = std::cos(pose.theta), s = std::sin(pose.theta);
    const int V = ego.grid.size, n = ego.center;
    const double res = geom.resolution();
    // agent position in map cell coordinates (integers at cell centers)
    const double ax = (pose.x - geom.center_of_x(0)) / res;
    const double ay = (pose.y - geom.center_of_y(0)) / res;
    for (int k = 0; k < ego.grid.channels; ++k) {
        const bool bilinear = k == kExploredChannel;
        for (int j = 0; j < V; ++j)
            for (int i = 0; i < V; ++i) {
                float v = ego.grid.at(k, i, j);
                if (v <= 0.0f) continue;
                double ex = (i - n) * ego.resolution, ey = (j - n) * ego.resolution;
                double u = ax + (c * ex - s * ey) / res;
                double w = ay + (s * ex + c * ey) / res;
                int iu = static_cast<int>(std::floor(u)), iw = static_cast<int>(std::floor(w));
                double fu = u - iu, fw = w - iw;
                if (!bilinear) {
                    int tx = iu + (fu >= 0.5 ? 1 : 0) - x0, ty = iw + (fw >= 0.5 ? 1 : 0) - y0;
                    if (dst.in_bounds(tx, ty)) dst.at(k, tx, ty) += v;
                    continue;
                }
                const double wt[4] = {(1 - fu) * (1 - fw), fu * (1 - fw), (1 - fu) * fw, fu * fw};
                const int tx[4] = {iu - x0, iu - x0 + 1, iu - x0, iu - x0 + 1};
                const int ty[4] = {iw - y0, iw - y0, iw - y0 + 1, iw - y0 + 1};
                for (int q = 0; q < 4; ++q)
                    if (dst.in_bounds(tx[q], ty[q]))
                        dst.at(k, tx[q], ty[q]) += v * static_cast<float>(wt[q]);
            }
    }
    for (float& v : dst.data) v = std::min(v, 1.0f);
}

}  // namespace detail

// Rigid rotate+translate of the ego grid into the geocentric frame of `geom`
// (which only supplies geometry — its contents are ignored).
inline MetricMap spatial_transform(const EgoProjection& ego, const ContinuousPose& pose,
                                   const MetricMap& geom) {
    if (ego.num_semantic() != geom.num_semantic())
        throw std::invalid_argument("spatial_transform: channel counts differ");
    if (!geom.contains(pose.x, pose.y))
        throw std::invalid_argument("spatial_transform: pose outside map");
    MetricMap out = geom;
    std::fill(out.grid().data.begin(), out.grid().data.end(), 0.0f);
    detail::splat_ego(ego, pose, geom, out.grid(), 0, 0);
    return out;
}

// Channel-wise max pooling (the fixed reading of the aggregation step; the
// sum-then-clamp alternative is deliberately not implemented).
inline MetricMap aggregate(const MetricMap& map, const MetricMap& aligned) {
    if (!map.same_geometry(aligned)) throw std::invalid_argument("aggregate: geometry mismatch");
    MetricMap out = map;
    for (std::size_t i = 0; i < out.grid().data.size(); ++i)
        out.grid().data[i] = std::max(out.grid().data[i], aligned.grid().data[i]);
    return out;
}

// Fused transform+aggregate over just the window the ego grid can reach;
// bit-identical to aggregate(map, spatial_transform(ego, pose, map)).
inline void stamp(MetricMap& map, const EgoProjection& ego, const ContinuousPose& pose) {
    if (ego.num_semantic() != map.num_semantic())
        throw std::invalid_argument("stamp: channel counts differ");
    if (!map.contains(pose.x, pose.y)) throw std::invalid_argument("stamp: pose outside map");
    const double half = (ego.center + 1) * ego.resolution * std::numbers::sqrt2;
    int x0 = std::max(0, map.cell_of_x(pose.x - half) - 1);
    int x1 = std::min(map.size() - 1, map.cell_of_x(pose.x + half) + 1);
    int y0 = std::max(0, map.cell_of_y(pose.y - half) - 1);
    int y1 = std::min(map.size() - 1, map.cell_of_y(pose.y + half) + 1);
    GridStack window(std::max(x1 - x0 + 1, y1 - y0 + 1), map.grid().channels);
    detail::splat_ego(ego, pose, map, window, x0, y0);
    for (int k = 0; k < map.grid().channels; ++k)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                float& cell = map.grid().at(k, x, y);
                cell = std::max(cell, window.at(k, x - x0, y - y0));
            }
}

struct Coverage {
    double m2 = 0.0;
    double percent = 0.0;
};

// Area known traversable: map cells explored, not obstacle, and actually free
// in the world, at 0.0025 m² per cell.
inline Coverage coverage(const MetricMap& map, const GridWorld& world) {
    int count = 0;
    for (int y = 0; y < map.size(); ++y)
        for (int x = 0; x < map.size(); ++x) {
            if (map.grid().at(kExploredChannel, x, y) <= 0.5f) continue;
            if (map.grid().at(kObstacleChannel, x, y) > 0.5f) continue;
            double wx = map.center_of_x(x), wy = map.center_of_y(y);
            if (world.free_cell(world.cell_x(wx), world.cell_y(wy))) ++count;
        }
    Coverage cov;
    cov.m2 = count * map.resolution() * map.resolution();
    double total = world.free_count() * world.cell_size() * world.cell_size();
    cov.percent = total > 0 ? cov.m2 / total : 0.0;
    return cov;
}

// Fixed-order double sum over the semantic channels.
inline double semantic_sum(const MetricMap& map) {
    double s = 0.0;
    for (int k = 2; k < map.grid().channels; ++k)
        for (int y = 0; y < map.size(); ++y)
            for (int x = 0; x < map.size(); ++x) s += map.grid().at(k, x, y);
    return s;
}

// r = lambda * (increase in the semantic map sum); aggregation monotonicity
// makes the increase nonnegative, so a negative difference means `next` was
// not produced from `prev` and is rejected.
inline double semantic_curiosity_reward(const MetricMap& prev, const MetricMap& next,
                                        double lambda_sc = kLambdaSemanticCuriosity) {
    if (!prev.same_geometry(next))
        throw std::invalid_argument("semantic_curiosity_reward: geometry mismatch");
    double diff = semantic_sum(next) - semantic_sum(prev);
    if (diff < 0.0)
        throw std::invalid_argument("semantic_curiosity_reward: semantic mass decreased");
    return lambda_sc * diff;
}

// Mass above the per-cell channel maximum: exactly 0 while every cell carries
// at most one semantic label, strictly positive once a confused detector
// stacks a second label anywhere.
inline double inconsistency_surplus(const MetricMap& map) {
    double s = 0.0;
    for (int y = 0; y < map.size(); ++y)
        for (int x = 0; x < map.size(); ++x) {
            double sum = 0.0, mx = 0.0;
            for (int k = 2; k < map.grid().channels; ++k) {
                double v = map.grid().at(k, x, y);
                sum += v;
                mx = std::max(mx, v);
            }
            s += sum - mx;
        }
    return s;
}

}  // namespace navlab
