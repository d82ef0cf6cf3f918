// treemon: simulate a tree-structured cluster monitoring system and analyze
// the job/property data it produces.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treemon/analyze.hpp"
#include "treemon/simulator.hpp"

namespace fs = std::filesystem;
using namespace treemon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Flag combinations CLI11 cannot express (either-or requirements, composite
// value formats). Distinct from data errors so they exit with code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<JobRecord> load_jobs(const fs::path& data_dir) {
    return read_jobs_tsv(data_dir / "jobs.tsv");
}

PropertyStore open_store(const fs::path& data_dir) {
    const fs::path path = data_dir / "properties.tsv";
    if (!fs::exists(path))
        throw IoFailure("no property store at " + path.string());
    return PropertyStore(path);
}

const JobRecord& find_job(const std::vector<JobRecord>& jobs, const std::string& id) {
    for (const JobRecord& job : jobs)
        if (job.job_id == id)
            return job;
    throw Error("job " + id + " not found in jobs.tsv");
}

// %g keeps short decimals short (2.04, 36.8) without trailing zeros.
void print_kv(const char* key, double value) {
    std::printf("%s=%.10g\n", key, value);
}

void print_kv(const char* key, long long value) {
    std::printf("%s=%lld\n", key, value);
}

void print_bytes_human(const char* what, double bytes) {
    if (bytes >= 1e11)
        std::printf("# %s: %.2f TB\n", what, bytes / 1e12);
    else if (bytes >= 1e8)
        std::printf("# %s: %.2f GB\n", what, bytes / 1e9);
    else if (bytes >= 1e5)
        std::printf("# %s: %.2f MB (%.2f MiB)\n", what, bytes / 1e6,
                    bytes / (1024.0 * 1024.0));
    else
        std::printf("# %s: %.0f bytes\n", what, bytes);
}

double runtime_from_flags(const std::optional<double>& runtime,
                          const std::optional<std::string>& job_id,
                          const fs::path& data_dir) {
    if (runtime)
        return *runtime;
    if (job_id)
        return find_job(load_jobs(data_dir), *job_id).runtime_s();
    throw UsageError("either --runtime or --job is required");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tree-structured cluster monitoring simulator and analysis toolkit"};
    app.require_subcommand(1);

    std::string data_dir = ".";
    bool human = false;
    app.add_option("--data", data_dir, "directory holding jobs.tsv / properties.tsv")
        ->capture_default_str();
    app.add_flag("--human", human, "add human-readable commentary");
    app.fallthrough();

    // simulate
    auto* simulate_cmd = app.add_subcommand("simulate", "run a simulation from a config");
    std::string config_path;
    simulate_cmd->add_option("config", config_path, "simulation config file")->required();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "job runtime quartiles and mean");

    // sufficiency
    auto* suff_cmd =
        app.add_subcommand("sufficiency", "sampling interval needed for a point target");
    long long target = 50;
    std::optional<double> opt_runtime;
    std::optional<std::string> opt_job;
    suff_cmd->add_option("--target", target, "data points wanted")->required();
    suff_cmd->add_option("--runtime", opt_runtime, "job runtime in seconds");
    suff_cmd->add_option("--job", opt_job, "job id to look up in jobs.tsv");

    // points
    auto* points_cmd =
        app.add_subcommand("points", "expected data points at a sampling interval");
    double points_interval = 600.0;
    std::optional<double> points_runtime;
    std::optional<std::string> points_job;
    points_cmd->add_option("--interval", points_interval, "sampling interval, seconds")
        ->required();
    points_cmd->add_option("--runtime", points_runtime, "job runtime in seconds");
    points_cmd->add_option("--job", points_job, "job id to look up in jobs.tsv");

    // nodes
    auto* nodes_cmd = app.add_subcommand("nodes", "map a core count onto whole nodes");
    std::string machine_name = "phase1_thin";
    long long nodes_cores = 0;
    nodes_cmd->add_option("--machine", machine_name, "machine preset name")
        ->capture_default_str();
    nodes_cmd->add_option("--cores", nodes_cores, "core count")->required();

    // clusters
    auto* clusters_cmd = app.add_subcommand("clusters", "grid-density job clustering");
    std::string cell_spec = "0.5,0.25";
    std::size_t min_density = 5;
    clusters_cmd->add_option("--cell", cell_spec,
                             "cell size: log2-cores width,log10-seconds width")
        ->capture_default_str();
    clusters_cmd->add_option("--min-density", min_density, "jobs per dense cell")
        ->capture_default_str();

    // vectorization
    auto* vec_cmd =
        app.add_subcommand("vectorization", "classify a job's AVX usage from the store");
    std::string vec_job;
    double vec_hi = 0.5, vec_lo = 0.05;
    vec_cmd->add_option("--job", vec_job, "job id")->required();
    vec_cmd->add_option("--hi", vec_hi, "median fraction at or above: VECTORIZED")
        ->capture_default_str();
    vec_cmd->add_option("--lo", vec_lo, "median fraction at or below: SCALAR")
        ->capture_default_str();

    // failures
    auto* failures_cmd =
        app.add_subcommand("failures", "jobs that should have data but have none");
    double failures_interval = 600.0;
    failures_cmd->add_option("--interval", failures_interval, "collection interval, seconds")
        ->required();

    // volume
    auto* volume_cmd = app.add_subcommand("volume", "monitoring data volume estimate");
    long long vol_cores = 0, vol_metrics = 0, vol_bytes = 4;
    double vol_interval = 1.0;
    volume_cmd->add_option("--cores", vol_cores, "system core count")->required();
    volume_cmd->add_option("--metrics", vol_metrics, "metrics collected per core")
        ->required();
    volume_cmd->add_option("--bytes", vol_bytes, "bytes per stored value")
        ->capture_default_str();
    volume_cmd->add_option("--interval", vol_interval, "collection interval, seconds")
        ->capture_default_str();

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "emit a cores/runtime scatter");
    std::string plot_out;
    std::string plot_format = "csv";
    std::string label_by = "app";
    plot_cmd->add_option("--out", plot_out, "output file")->required();
    plot_cmd->add_option("--format", plot_format, "csv or svg")
        ->check(CLI::IsMember({"csv", "svg"}))
        ->capture_default_str();
    plot_cmd->add_option("--label-by", label_by, "marker label source")
        ->check(CLI::IsMember({"app", "owner", "none"}))
        ->capture_default_str();

    // topo
    auto* topo_cmd = app.add_subcommand("topo", "print an agent tree as text");
    int topo_nodes = 64;
    int topo_cf = 512, topo_sf = 64;
    topo_cmd->add_option("--nodes", topo_nodes, "compute node count")->required();
    topo_cmd->add_option("--collector-fanout", topo_cf, "measurement agents per collector")
        ->capture_default_str();
    topo_cmd->add_option("--sync-fanout", topo_sf, "children per sync agent")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const fs::path dir(data_dir);

        if (simulate_cmd->parsed()) {
            const SimConfig cfg = parse_sim_config_file(config_path);
            const SimOutput out = run_simulation(cfg, dir);
            print_kv("jobs", static_cast<long long>(out.job_count));
            print_kv("cycles", static_cast<long long>(out.cycle_count));
            print_kv("records", static_cast<long long>(out.record_count));
            if (human)
                std::printf("# wrote %s and %s\n", out.jobs_file.c_str(),
                            out.store_file.c_str());
        } else if (stats_cmd->parsed()) {
            const RuntimeStats s = runtime_stats(load_jobs(dir));
            print_kv("n", static_cast<long long>(s.n));
            print_kv("q1", s.q1);
            print_kv("median", s.median);
            print_kv("mean", s.mean);
            print_kv("q3", s.q3);
            if (human)
                std::printf("# execution time quartiles over %zu jobs, seconds\n", s.n);
        } else if (suff_cmd->parsed()) {
            const double runtime = runtime_from_flags(opt_runtime, opt_job, dir);
            try {
                const IntervalSuggestion s = required_interval(runtime, target);
                print_kv("exact_s", s.exact_s);
                print_kv("nice_s", s.nice_s);
                if (human)
                    std::printf("# sample every %.10g s (conventional: %.10g s) to get "
                                "%lld points from a %.10g s run\n",
                                s.exact_s, s.nice_s, target, runtime);
            } catch (const TooShort&) {
                print_kv("exact_s", runtime / static_cast<double>(target));
                std::printf("too_short=true\n");
                if (human)
                    std::printf("# a %.10g s run cannot produce %lld points at sane "
                                "sampling rates\n",
                                runtime, target);
            }
        } else if (points_cmd->parsed()) {
            const double runtime = runtime_from_flags(points_runtime, points_job, dir);
            const double expected = expected_points(runtime, points_interval);
            print_kv("expected", expected);
            print_kv("display", display_points(expected));
            if (human)
                std::printf("# a %.10g s run sampled every %.10g s yields about %lld "
                            "data points\n",
                            runtime, points_interval, display_points(expected));
        } else if (nodes_cmd->parsed()) {
            const MachinePreset machine = machine_preset(machine_name);
            print_kv("nodes", cores_to_nodes(nodes_cores, machine));
            if (human)
                std::printf("# %lld cores need %lld %s nodes (%d cores each)\n",
                            nodes_cores, cores_to_nodes(nodes_cores, machine),
                            machine.name.c_str(), machine.cores_per_node);
        } else if (clusters_cmd->parsed()) {
            double cell_x = 0.5, cell_y = 0.25;
            if (std::sscanf(cell_spec.c_str(), "%lf,%lf", &cell_x, &cell_y) != 2)
                throw UsageError("bad --cell, expected two comma-separated widths");
            const auto jobs = load_jobs(dir);
            for (const Cluster& c : detect_clusters(jobs, cell_x, cell_y, min_density))
                std::printf("cores=%.6g seconds=%.6g jobs=%zu\n", c.centroid_cores,
                            c.centroid_seconds, c.job_count);
            if (human)
                std::printf("# cells of %.10g x %.10g log units, >= %zu jobs each\n",
                            cell_x, cell_y, min_density);
        } else if (vec_cmd->parsed()) {
            const PropertyStore store = open_store(dir);
            const VectorizationResult r =
                classify_vectorization(vec_job, store, vec_hi, vec_lo);
            std::printf("label=%s\n", std::string(vectorization_token(r.label)).c_str());
            print_kv("records", static_cast<long long>(r.record_count));
            if (r.record_count > 0)
                print_kv("median_avx_fraction", r.median_avx_fraction);
            if (human)
                std::printf("# thresholds: >= %.10g vectorized, <= %.10g scalar\n",
                            vec_hi, vec_lo);
        } else if (failures_cmd->parsed()) {
            const auto jobs = load_jobs(dir);
            const PropertyStore store = open_store(dir);
            for (const std::string& id :
                 detect_tool_failures(jobs, store, failures_interval))
                std::printf("%s\n", id.c_str());
        } else if (volume_cmd->parsed()) {
            const VolumeEstimate v =
                estimate_volume(vol_cores, vol_metrics, vol_bytes, vol_interval);
            print_kv("per_timepoint_bytes", v.per_timepoint_bytes);
            print_kv("per_day_bytes", v.per_day_bytes);
            if (human) {
                print_bytes_human("per time point", v.per_timepoint_bytes);
                print_bytes_human("per day", v.per_day_bytes);
            }
        } else if (plot_cmd->parsed()) {
            const auto jobs = load_jobs(dir);
            std::map<std::string, std::string> labels;
            for (const JobRecord& job : jobs) {
                if (label_by == "app")
                    labels[job.job_id] = job.app_tag;
                else if (label_by == "owner")
                    labels[job.job_id] = job.owner_group;
            }
            emit_scatter(jobs, labels, plot_out,
                         plot_format == "svg" ? ScatterFormat::Svg : ScatterFormat::Csv);
            if (human)
                std::printf("# wrote %s (%s)\n", plot_out.c_str(), plot_format.c_str());
        } else if (topo_cmd->parsed()) {
            const TreeTopology topo = build_tree(topo_nodes, topo_cf, topo_sf);
            std::fputs(format_topology(topo).c_str(), stdout);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}
