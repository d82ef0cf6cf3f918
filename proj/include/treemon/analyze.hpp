#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "treemon/machine.hpp"
#include "treemon/quantiles.hpp"
#include "treemon/store.hpp"

namespace treemon {

struct RuntimeStats {
    double q1 = 0.0;
    double median = 0.0;
    double mean = 0.0;
    double q3 = 0.0;
    std::size_t n = 0;
};

/// Quartiles of job runtimes, linear interpolation on (n-1)p, plus the
/// arithmetic mean.
inline RuntimeStats runtime_stats(std::span<const JobRecord> jobs) {
    if (jobs.empty())
        throw EmptyInput("runtime_stats: no jobs");
    std::vector<double> runtimes;
    runtimes.reserve(jobs.size());
    double sum = 0.0;
    for (const JobRecord& job : jobs) {
        runtimes.push_back(job.runtime_s());
        sum += runtimes.back();
    }
    std::sort(runtimes.begin(), runtimes.end());
    RuntimeStats stats;
    stats.n = runtimes.size();
    stats.q1 = interpolated_quantile(runtimes, 0.25);
    stats.median = interpolated_quantile(runtimes, 0.5);
    stats.q3 = interpolated_quantile(runtimes, 0.75);
    stats.mean = sum / static_cast<double>(runtimes.size());
    return stats;
}

/// Expected number of global-grid sampling instants inside a job of the
/// given runtime.
inline double expected_points(double runtime_s, double interval_s) {
    if (runtime_s < 0.0 || interval_s <= 0.0)
        throw Error("expected_points: runtime must be >= 0 and interval > 0");
    return runtime_s / interval_s;
}

// Display rounding: half away from zero.
inline long long display_points(double expected) {
    return std::llround(expected);
}

// Conventional sampling intervals, seconds.
inline constexpr std::array<double, 13> kNiceIntervals = {
    1, 2, 5, 10, 15, 20, 30, 60, 120, 300, 600, 1800, 3600};

struct IntervalSuggestion {
    double exact_s = 0.0; // runtime / target
    double nice_s = 0.0;  // largest conventional interval still meeting the target
};

/// Sampling interval needed for `target_points` measurements within a run.
/// The nice interval is chosen directly by the guarantee runtime/nice >=
/// target, so the postcondition holds even at ladder boundaries. Throws
/// TooShort when not even one-second sampling reaches the target.
inline IntervalSuggestion required_interval(double runtime_s, long long target_points) {
    if (runtime_s <= 0.0 || target_points < 1)
        throw Error("required_interval: runtime must be > 0 and target >= 1");
    IntervalSuggestion out;
    out.exact_s = runtime_s / static_cast<double>(target_points);
    if (out.exact_s < 1.0)
        throw TooShort("a " + std::to_string(runtime_s) +
                       " s run cannot produce the target at sane sampling rates");
    out.nice_s = 0.0;
    for (const double step : kNiceIntervals)
        if (runtime_s / step >= static_cast<double>(target_points))
            out.nice_s = step;
    if (out.nice_s == 0.0)
        throw TooShort("no conventional interval reaches the target");
    return out;
}

inline long long cores_to_nodes(long long cores, const MachinePreset& machine) {
    if (cores < 1)
        throw Error("cores_to_nodes: cores must be >= 1");
    return (cores + machine.cores_per_node - 1) / machine.cores_per_node;
}

struct Cluster {
    double centroid_cores = 0.0;
    double centroid_seconds = 0.0;
    std::size_t job_count = 0;
    std::vector<std::string> members; // job ids, sorted
};

/// Density clustering on the (log2 cores, log10 runtime) grid: cells with at
/// least min_density jobs are merged by 8-neighbor connectivity; centroids
/// are arithmetic means in log space reported in linear units.
inline std::vector<Cluster> detect_clusters(std::span<const JobRecord> jobs,
                                            double cell_log2_cores = 0.5,
                                            double cell_log10_seconds = 0.25,
                                            std::size_t min_density = 5) {
    if (jobs.empty())
        throw EmptyInput("detect_clusters: no jobs");
    if (cell_log2_cores <= 0.0 || cell_log10_seconds <= 0.0)
        throw Error("detect_clusters: cell widths must be > 0");

    struct CellKey {
        std::int64_t x = 0, y = 0;
        auto operator<=>(const CellKey&) const = default;
    };
    std::map<CellKey, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const double lx = std::log2(static_cast<double>(jobs[i].cores));
        const double ly = std::log10(std::max(1.0, jobs[i].runtime_s()));
        cells[{static_cast<std::int64_t>(std::floor(lx / cell_log2_cores)),
               static_cast<std::int64_t>(std::floor(ly / cell_log10_seconds))}]
            .push_back(i);
    }

    std::vector<CellKey> dense;
    for (const auto& [key, members] : cells)
        if (members.size() >= min_density)
            dense.push_back(key);

    // Union dense cells that touch (8-neighbor connectivity).
    std::map<CellKey, std::size_t> index;
    for (std::size_t i = 0; i < dense.size(); ++i)
        index[dense[i]] = i;
    std::vector<std::size_t> parent(dense.size());
    for (std::size_t i = 0; i < parent.size(); ++i)
        parent[i] = i;
    const auto find = [&](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };
    for (std::size_t i = 0; i < dense.size(); ++i)
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                const auto it = index.find({dense[i].x + dx, dense[i].y + dy});
                if (it != index.end())
                    parent[find(i)] = find(it->second);
            }

    std::map<std::size_t, std::vector<std::size_t>> groups; // root -> job indices
    for (std::size_t i = 0; i < dense.size(); ++i)
        for (const std::size_t job : cells.at(dense[i]))
            groups[find(i)].push_back(job);

    std::vector<Cluster> clusters;
    for (auto& [root, member_idx] : groups) {
        Cluster c;
        c.job_count = member_idx.size();
        for (const std::size_t i : member_idx)
            c.members.push_back(jobs[i].job_id);
        // Canonical member order makes the log-space sums independent of the
        // caller's job ordering.
        std::vector<std::size_t> ordered(member_idx.begin(), member_idx.end());
        std::sort(ordered.begin(), ordered.end(), [&](std::size_t a, std::size_t b) {
            return jobs[a].job_id < jobs[b].job_id;
        });
        double sx = 0.0, sy = 0.0;
        for (const std::size_t i : ordered) {
            sx += std::log2(static_cast<double>(jobs[i].cores));
            sy += std::log10(std::max(1.0, jobs[i].runtime_s()));
        }
        c.centroid_cores = std::exp2(sx / static_cast<double>(ordered.size()));
        c.centroid_seconds = std::pow(10.0, sy / static_cast<double>(ordered.size()));
        std::sort(c.members.begin(), c.members.end());
        clusters.push_back(std::move(c));
    }
    std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
        if (a.centroid_cores != b.centroid_cores)
            return a.centroid_cores < b.centroid_cores;
        return a.centroid_seconds < b.centroid_seconds;
    });
    return clusters;
}

enum class VectorizationLabel { Vectorized, Scalar, Indeterminate };

constexpr std::string_view vectorization_token(VectorizationLabel label) {
    switch (label) {
    case VectorizationLabel::Vectorized: return "VECTORIZED";
    case VectorizationLabel::Scalar: return "SCALAR";
    case VectorizationLabel::Indeterminate: return "INDETERMINATE";
    }
    return "";
}

struct VectorizationResult {
    VectorizationLabel label = VectorizationLabel::Indeterminate;
    double median_avx_fraction = 0.0; // meaningless when record_count == 0
    std::size_t record_count = 0;
};

/// Decides whether a job ran a vectorized binary from its stored AVX
/// fraction records: the median of the stored medians is compared against
/// the hi/lo thresholds.
inline VectorizationResult classify_vectorization(const std::string& job_id,
                                                  const PropertyStore& store,
                                                  double hi = 0.5, double lo = 0.05) {
    if (lo > hi)
        throw Error("classify_vectorization: lo threshold above hi");
    PropertyStore::Query q;
    q.job_id = job_id;
    q.metric = PropertyKind::AvxFraction;
    std::vector<double> medians;
    for (const StoreRecord& r : store.query(q))
        medians.push_back(r.summary.deciles[4]); // level 0.5
    VectorizationResult out;
    out.record_count = medians.size();
    if (medians.empty())
        return out;
    std::sort(medians.begin(), medians.end());
    out.median_avx_fraction = interpolated_quantile(medians, 0.5);
    if (out.median_avx_fraction >= hi)
        out.label = VectorizationLabel::Vectorized;
    else if (out.median_avx_fraction <= lo)
        out.label = VectorizationLabel::Scalar;
    return out;
}

/// Jobs long enough that the sampling grid should have produced data, yet
/// with zero stored records: the signature of a monitoring-tool failure.
inline std::vector<std::string> detect_tool_failures(std::span<const JobRecord> jobs,
                                                     const PropertyStore& store,
                                                     double interval_s) {
    std::set<std::string> with_records;
    for (const StoreRecord& r : store.query({}))
        with_records.insert(r.job_id);
    std::vector<std::string> flagged;
    for (const JobRecord& job : jobs) {
        if (with_records.count(job.job_id))
            continue;
        if (display_points(expected_points(job.runtime_s(), interval_s)) >= 1)
            flagged.push_back(job.job_id);
    }
    std::sort(flagged.begin(), flagged.end());
    return flagged;
}

struct VolumeEstimate {
    double per_timepoint_bytes = 0.0;
    double per_day_bytes = 0.0;
};

/// Data-volume arithmetic for a monitoring deployment.
inline VolumeEstimate estimate_volume(long long cores, long long metrics,
                                      long long bytes_per_value, double interval_s) {
    if (cores < 1 || metrics < 1 || bytes_per_value < 1 || interval_s <= 0.0)
        throw Error("estimate_volume: all inputs must be positive");
    VolumeEstimate v;
    v.per_timepoint_bytes = static_cast<double>(cores) * static_cast<double>(metrics) *
                            static_cast<double>(bytes_per_value);
    v.per_day_bytes = v.per_timepoint_bytes * (86400.0 / interval_s);
    return v;
}

// --------------------------------------------------------------------------
// Scatter emission

enum class ScatterFormat { Csv, Svg };

namespace detail {

struct LogAxis {
    double lo = 0.0; // log10 units
    double hi = 1.0;

    double place(double value, double px_lo, double px_hi) const {
        const double t = (std::log10(value) - lo) / (hi - lo);
        return px_lo + t * (px_hi - px_lo);
    }
};

inline LogAxis fit_axis(double min_value, double max_value) {
    LogAxis axis;
    axis.lo = std::floor(std::log10(min_value));
    axis.hi = std::ceil(std::log10(max_value));
    if (axis.hi - axis.lo < 1.0)
        axis.hi = axis.lo + 1.0;
    return axis;
}

inline std::string two_places(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string axis_label(double decade) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::pow(10.0, decade));
    return buf;
}

} // namespace detail

// SVG geometry, shared with the test oracle that recomputes coordinates.
struct ScatterLayout {
    static constexpr double width = 800.0;
    static constexpr double height = 600.0;
    static constexpr double margin_left = 70.0;
    static constexpr double margin_right = 20.0;
    static constexpr double margin_top = 20.0;
    static constexpr double margin_bottom = 60.0;
};

/// Writes a cores-vs-runtime scatter. CSV: header plus one row per job.
/// SVG: log-log plot, one marker per job, marker class keyed by label.
/// Byte-deterministic for identical inputs.
inline void emit_scatter(std::span<const JobRecord> jobs,
                         const std::map<std::string, std::string>& labels,
                         const std::filesystem::path& out_path, ScatterFormat format) {
    if (jobs.empty())
        throw EmptyInput("emit_scatter: no jobs");

    auto label_of = [&](const JobRecord& job) -> std::string {
        const auto it = labels.find(job.job_id);
        return it == labels.end() ? std::string() : it->second;
    };

    std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw IoFailure("cannot open " + out_path.string());

    if (format == ScatterFormat::Csv) {
        out << "job_id,cores,runtime_s,label\n";
        for (const JobRecord& job : jobs)
            out << job.job_id << ',' << job.cores << ','
                << static_cast<std::int64_t>(job.runtime_s()) << ',' << label_of(job)
                << '\n';
        out.flush();
        if (!out)
            throw IoFailure("write failed on " + out_path.string());
        return;
    }

    double min_cores = jobs[0].cores, max_cores = jobs[0].cores;
    double min_rt = std::max(1.0, jobs[0].runtime_s());
    double max_rt = min_rt;
    for (const JobRecord& job : jobs) {
        min_cores = std::min(min_cores, static_cast<double>(job.cores));
        max_cores = std::max(max_cores, static_cast<double>(job.cores));
        const double rt = std::max(1.0, job.runtime_s());
        min_rt = std::min(min_rt, rt);
        max_rt = std::max(max_rt, rt);
    }
    const detail::LogAxis x_axis = detail::fit_axis(min_cores, max_cores);
    const detail::LogAxis y_axis = detail::fit_axis(min_rt, max_rt);

    using L = ScatterLayout;
    const double plot_left = L::margin_left;
    const double plot_right = L::width - L::margin_right;
    const double plot_top = L::margin_top;
    const double plot_bottom = L::height - L::margin_bottom;

    // Stable label -> marker class mapping, in sorted label order.
    std::set<std::string> label_set;
    for (const JobRecord& job : jobs)
        label_set.insert(label_of(job));
    std::map<std::string, int> label_class;
    for (const std::string& label : label_set)
        label_class[label] = static_cast<int>(label_class.size());
    static constexpr std::array<std::string_view, 8> palette = {
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
        "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L::width
        << "\" height=\"" << L::height << "\" viewBox=\"0 0 " << L::width << ' '
        << L::height << "\">\n";
    out << "<style>\n";
    out << "text { font-family: sans-serif; font-size: 12px; }\n";
    for (const auto& [label, cls] : label_class)
        out << ".m" << cls << " { fill: " << palette[cls % palette.size()]
            << "; fill-opacity: 0.7; }\n";
    out << "</style>\n";
    out << "<rect width=\"" << L::width << "\" height=\"" << L::height
        << "\" fill=\"white\"/>\n";

    // Decade gridlines and tick labels.
    for (double d = x_axis.lo; d <= x_axis.hi + 1e-9; d += 1.0) {
        const double px = x_axis.place(std::pow(10.0, d), plot_left, plot_right);
        out << "<line x1=\"" << detail::two_places(px) << "\" y1=\""
            << detail::two_places(plot_top) << "\" x2=\"" << detail::two_places(px)
            << "\" y2=\"" << detail::two_places(plot_bottom)
            << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << detail::two_places(px) << "\" y=\""
            << detail::two_places(plot_bottom + 18.0) << "\" text-anchor=\"middle\">"
            << detail::axis_label(d) << "</text>\n";
    }
    for (double d = y_axis.lo; d <= y_axis.hi + 1e-9; d += 1.0) {
        const double py = plot_bottom - (y_axis.place(std::pow(10.0, d), 0.0, 1.0)) *
                                            (plot_bottom - plot_top);
        out << "<line x1=\"" << detail::two_places(plot_left) << "\" y1=\""
            << detail::two_places(py) << "\" x2=\"" << detail::two_places(plot_right)
            << "\" y2=\"" << detail::two_places(py) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << detail::two_places(plot_left - 8.0) << "\" y=\""
            << detail::two_places(py + 4.0) << "\" text-anchor=\"end\">"
            << detail::axis_label(d) << "</text>\n";
    }
    out << "<rect x=\"" << detail::two_places(plot_left) << "\" y=\""
        << detail::two_places(plot_top) << "\" width=\""
        << detail::two_places(plot_right - plot_left) << "\" height=\""
        << detail::two_places(plot_bottom - plot_top)
        << "\" fill=\"none\" stroke=\"black\"/>\n";

    out << "<text x=\"" << detail::two_places((plot_left + plot_right) / 2.0)
        << "\" y=\"" << detail::two_places(L::height - 12.0)
        << "\" text-anchor=\"middle\">CPU cores</text>\n";
    out << "<text x=\"16\" y=\"" << detail::two_places((plot_top + plot_bottom) / 2.0)
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << detail::two_places((plot_top + plot_bottom) / 2.0)
        << ")\">execution time (s)</text>\n";

    for (const JobRecord& job : jobs) {
        const double px =
            x_axis.place(static_cast<double>(job.cores), plot_left, plot_right);
        const double py = plot_bottom - y_axis.place(std::max(1.0, job.runtime_s()), 0.0,
                                                     1.0) *
                                            (plot_bottom - plot_top);
        out << "<circle class=\"m" << label_class.at(label_of(job)) << "\" cx=\""
            << detail::two_places(px) << "\" cy=\"" << detail::two_places(py)
            << "\" r=\"3\"><title>" << job.job_id << "</title></circle>\n";
    }

    // Legend, one swatch per label.
    double legend_y = plot_top + 14.0;
    for (const auto& [label, cls] : label_class) {
        if (label.empty() && label_class.size() == 1)
            break;
        out << "<circle class=\"m" << cls << "\" cx=\""
            << detail::two_places(plot_right - 130.0) << "\" cy=\""
            << detail::two_places(legend_y - 4.0) << "\" r=\"4\"/>\n";
        out << "<text x=\"" << detail::two_places(plot_right - 120.0) << "\" y=\""
            << detail::two_places(legend_y) << "\">"
            << (label.empty() ? "(unlabeled)" : label) << "</text>\n";
        legend_y += 16.0;
    }
    out << "</svg>\n";
    out.flush();
    if (!out)
        throw IoFailure("write failed on " + out_path.string());
}

} // namespace treemon
