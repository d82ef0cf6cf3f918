#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "treemon/agents.hpp"
#include "treemon/machine.hpp"
#include "treemon/store.hpp"

namespace treemon {

namespace simrng {

inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Self-contained deterministic stream. Raw engine output is mapped to
// doubles explicitly so values never depend on a library distribution.
class Stream {
public:
    explicit Stream(std::uint64_t key) : engine_(mix(key)) {}

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double gauss() {
        double u1 = uniform01();
        while (u1 <= 0.0)
            u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Normal draw restricted to [lo, hi]: resample, clamp as a last resort.
    double truncated_gauss(double mean, double sd, double lo, double hi) {
        if (sd == 0.0)
            return std::clamp(mean, lo, hi);
        for (int tries = 0; tries < 100; ++tries) {
            const double v = mean + sd * gauss();
            if (v >= lo && v <= hi)
                return v;
        }
        return std::clamp(mean, lo, hi);
    }

    std::int64_t below(std::int64_t n) {
        return static_cast<std::int64_t>(uniform01() * static_cast<double>(n));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace simrng

// Per-application statistical shape: property distributions per core, a
// log-normal runtime and a categorical core-count distribution.
struct WorkloadProfile {
    std::string name;
    double cpi_mean = 1.0, cpi_sd = 0.0;
    double mispredict_mean = 0.0, mispredict_sd = 0.0;
    double flops_rate_mean = 1e9, flops_rate_sd = 0.0; // ops/s per core
    double avx_fraction_mean = 0.0, avx_fraction_sd = 0.0;
    double runtime_log_mu = 5.0, runtime_log_sigma = 0.0; // ln seconds
    std::vector<std::pair<int, double>> cores_dist = {{16, 1.0}};

    void validate() const {
        if (cpi_mean <= 0.0 || cpi_sd < 0.0 || mispredict_sd < 0.0 ||
            flops_rate_mean < 0.0 || flops_rate_sd < 0.0 || avx_fraction_sd < 0.0)
            throw InvalidRecord("profile " + name + ": parameter out of range");
        if (mispredict_mean < 0.0 || mispredict_mean > 1.0 || avx_fraction_mean < 0.0 ||
            avx_fraction_mean > 1.0)
            throw InvalidRecord("profile " + name + ": ratio mean outside [0,1]");
        if (runtime_log_sigma < 0.0 || cores_dist.empty())
            throw InvalidRecord("profile " + name + ": bad runtime or core distribution");
        for (const auto& [cores, weight] : cores_dist)
            if (cores < 1 || weight <= 0.0)
                throw InvalidRecord("profile " + name + ": bad core distribution entry");
    }
};

/// Built-in workload shapes. Cluster positions and runtime quartiles are
/// qualitative desk-scale mimicry of the applications they are named after,
/// not measured data.
inline WorkloadProfile workload_preset(std::string_view name) {
    WorkloadProfile p;
    p.name = std::string(name);
    if (name == "bqcd_like") {
        // Highly vectorized matrix kernels: high CPI, high AVX share, short
        // tightly clustered runs on a fixed core count.
        p.cpi_mean = 2.2;
        p.cpi_sd = 0.15;
        p.mispredict_mean = 0.002;
        p.mispredict_sd = 0.0005;
        p.flops_rate_mean = 1.8e9;
        p.flops_rate_sd = 2e8;
        p.avx_fraction_mean = 0.75;
        p.avx_fraction_sd = 0.05;
        p.runtime_log_mu = std::log(147.0);
        p.runtime_log_sigma = 0.18;
        p.cores_dist = {{256, 1.0}};
        return p;
    }
    if (name == "seissol_opt") {
        p.cpi_mean = 1.1;
        p.cpi_sd = 0.1;
        p.mispredict_mean = 0.001;
        p.mispredict_sd = 0.0003;
        p.flops_rate_mean = 6e9;
        p.flops_rate_sd = 5e8;
        p.avx_fraction_mean = 0.8;
        p.avx_fraction_sd = 0.05;
        p.runtime_log_mu = std::log(2400.0);
        p.runtime_log_sigma = 0.3;
        p.cores_dist = {{64, 0.6}, {128, 0.4}};
        return p;
    }
    if (name == "seissol_unopt") {
        // Same solver built without vector units: almost no AVX work.
        p.cpi_mean = 1.6;
        p.cpi_sd = 0.15;
        p.mispredict_mean = 0.004;
        p.mispredict_sd = 0.001;
        p.flops_rate_mean = 8e8;
        p.flops_rate_sd = 1e8;
        p.avx_fraction_mean = 0.01;
        p.avx_fraction_sd = 0.005;
        p.runtime_log_mu = std::log(2400.0);
        p.runtime_log_sigma = 0.3;
        p.cores_dist = {{64, 0.6}, {128, 0.4}};
        return p;
    }
    if (name == "gadget_like") {
        // Wide spread of core counts and strongly right-skewed runtimes.
        p.cpi_mean = 1.3;
        p.cpi_sd = 0.2;
        p.mispredict_mean = 0.005;
        p.mispredict_sd = 0.002;
        p.flops_rate_mean = 1.2e9;
        p.flops_rate_sd = 3e8;
        p.avx_fraction_mean = 0.35;
        p.avx_fraction_sd = 0.1;
        p.runtime_log_mu = std::log(1800.0);
        p.runtime_log_sigma = 0.7;
        p.cores_dist = {{16, 0.4}, {64, 0.35}, {128, 0.25}};
        return p;
    }
    if (name == "namd_like") {
        // Mixed execution modes, median runtime too short to sample.
        p.cpi_mean = 1.4;
        p.cpi_sd = 0.2;
        p.mispredict_mean = 0.006;
        p.mispredict_sd = 0.002;
        p.flops_rate_mean = 1e9;
        p.flops_rate_sd = 2e8;
        p.avx_fraction_mean = 0.3;
        p.avx_fraction_sd = 0.1;
        p.runtime_log_mu = std::log(95.0);
        p.runtime_log_sigma = 0.5;
        p.cores_dist = {{16, 0.6}, {128, 0.4}};
        return p;
    }
    throw Error("unknown workload preset: " + std::string(name));
}

struct FaultSpec {
    NodeId node = 0;
    std::int64_t from_cycle = 0; // cycle ordinals, inclusive
    std::int64_t to_cycle = 0;

    void validate() const {
        if (from_cycle > to_cycle || from_cycle < 0)
            throw InvalidRecord("fault spec: from_cycle must be <= to_cycle and >= 0");
    }
};

struct ProfileGroup {
    WorkloadProfile profile;
    int job_count = 0;
    std::string owner_group;
};

struct SimConfig {
    MachinePreset machine;
    int collector_fanout = 512;
    int sync_fanout = 64;
    std::vector<ProfileGroup> groups;
    std::int64_t interval_s = 600;
    std::int64_t horizon_s = 86400;
    std::uint64_t seed = 0;
    std::vector<FaultSpec> faults;

    void validate() const {
        if (machine.cores_per_node < 1 || machine.node_count < 1)
            throw InvalidRecord("config: bad machine");
        if (interval_s <= 0 || horizon_s < interval_s)
            throw InvalidRecord("config: interval must be > 0 and horizon >= interval");
        if (collector_fanout < 1 || sync_fanout < 1)
            throw InvalidRecord("config: fanouts must be >= 1");
        for (const ProfileGroup& g : groups) {
            g.profile.validate();
            if (g.job_count < 0)
                throw InvalidRecord("config: negative job count");
        }
        for (const FaultSpec& f : faults)
            f.validate();
    }
};

namespace detail {

inline std::uint64_t job_stream_key(std::uint64_t seed, std::size_t group, int index) {
    std::uint64_t h = simrng::mix(seed ^ simrng::hash_str("jobgen"));
    h = simrng::mix(h ^ group);
    h = simrng::mix(h ^ static_cast<std::uint64_t>(index));
    return h;
}

inline std::uint64_t counter_stream_key(std::uint64_t seed, std::string_view job_id,
                                        int core, std::int64_t cycle_ts) {
    std::uint64_t h = simrng::mix(seed ^ simrng::hash_str(job_id));
    h = simrng::mix(h ^ static_cast<std::uint64_t>(core));
    h = simrng::mix(h ^ static_cast<std::uint64_t>(cycle_ts));
    return h;
}

inline int draw_cores(const WorkloadProfile& p, double u) {
    double total = 0.0;
    for (const auto& [cores, weight] : p.cores_dist)
        total += weight;
    double cut = u * total;
    for (const auto& [cores, weight] : p.cores_dist) {
        cut -= weight;
        if (cut < 0.0)
            return cores;
    }
    return p.cores_dist.back().first;
}

} // namespace detail

/// Draws the job population and places it on nodes. Jobs are placed in start
/// order, first fit over node busy intervals (closed-interval overlap, so a
/// cycle instant never sees two jobs on one node's cores). Deterministic
/// under the config seed.
inline std::vector<JobRecord> generate_jobs(const SimConfig& cfg) {
    cfg.validate();
    std::vector<JobRecord> jobs;
    std::size_t job_index = 0;
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        const ProfileGroup& group = cfg.groups[g];
        for (int j = 0; j < group.job_count; ++j, ++job_index) {
            simrng::Stream st(detail::job_stream_key(cfg.seed, g, j));
            JobRecord job;
            char buf[16];
            std::snprintf(buf, sizeof buf, "J%04zu", job_index);
            job.job_id = buf;
            job.owner_group = group.owner_group;
            job.app_tag = group.profile.name;
            job.cores = detail::draw_cores(group.profile, st.uniform01());
            const double runtime =
                std::exp(group.profile.runtime_log_mu +
                         group.profile.runtime_log_sigma * st.gauss());
            job.start_ts = st.below(cfg.horizon_s);
            job.end_ts = job.start_ts + std::max<std::int64_t>(1, std::llround(runtime));
            jobs.push_back(std::move(job));
        }
    }

    // Placement in start order; ties break on job id.
    std::vector<std::size_t> order(jobs.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (jobs[a].start_ts != jobs[b].start_ts)
            return jobs[a].start_ts < jobs[b].start_ts;
        return jobs[a].job_id < jobs[b].job_id;
    });

    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> busy(
        cfg.machine.node_count);
    for (const std::size_t idx : order) {
        JobRecord& job = jobs[idx];
        const int need =
            (job.cores + cfg.machine.cores_per_node - 1) / cfg.machine.cores_per_node;
        if (need > cfg.machine.node_count)
            throw CapacityExceeded("job " + job.job_id + " needs " + std::to_string(need) +
                                   " nodes, machine has " +
                                   std::to_string(cfg.machine.node_count));
        for (NodeId node = 0;
             node < cfg.machine.node_count && static_cast<int>(job.nodes.size()) < need;
             ++node) {
            bool free = true;
            for (const auto& [s, e] : busy[node])
                if (job.start_ts <= e && s <= job.end_ts) {
                    free = false;
                    break;
                }
            if (free)
                job.nodes.push_back(node);
        }
        if (static_cast<int>(job.nodes.size()) < need)
            throw CapacityExceeded("offered load cannot be placed: job " + job.job_id +
                                   " found no fit at start " +
                                   std::to_string(job.start_ts));
        for (const NodeId node : job.nodes)
            busy[node].push_back({job.start_ts, job.end_ts});
    }
    return jobs;
}

namespace detail {
// Power of two, so ratio targets scale without any rounding.
inline constexpr double kSimInstructions = 1073741824.0; // 2^30
} // namespace detail

/// Builds a counter sample that realizes the drawn property targets exactly:
/// instructions are fixed at 2^30 and the remaining counters derived from the
/// targets. Deterministic under (seed, job, core, cycle).
inline CounterSample sample_counters(const WorkloadProfile& profile,
                                     const std::string& job_id, int core,
                                     std::int64_t cycle_ts, std::uint64_t seed) {
    simrng::Stream st(detail::counter_stream_key(seed, job_id, core, cycle_ts));
    const double huge = std::numeric_limits<double>::max();
    const double cpi = st.truncated_gauss(profile.cpi_mean, profile.cpi_sd, 1e-9, huge);
    const double br =
        st.truncated_gauss(profile.mispredict_mean, profile.mispredict_sd, 0.0, 1.0);
    const double rate =
        st.truncated_gauss(profile.flops_rate_mean, profile.flops_rate_sd, 0.0, huge);
    const double avx_frac =
        st.truncated_gauss(profile.avx_fraction_mean, profile.avx_fraction_sd, 0.0, 1.0);

    CounterSample s;
    s.window_s = 1.0;
    s.instructions = detail::kSimInstructions;
    s.cycles = cpi * detail::kSimInstructions;
    s.branch_mispredictions = br * detail::kSimInstructions;
    const double total_fp = rate * s.window_s;
    s.fp_avx_ops = avx_frac * total_fp;
    s.fp_scalar_ops = total_fp - s.fp_avx_ops;
    return s;
}

/// Counter source backed by the workload profiles of a config. Streams are
/// keyed by (seed, job, core, cycle), so removing a node's agent never shifts
/// any other core's draws.
class SimCounterSource : public CounterSource {
public:
    explicit SimCounterSource(const SimConfig& cfg) : seed_(cfg.seed) {
        for (const ProfileGroup& g : cfg.groups)
            profiles_.emplace(g.profile.name, g.profile);
    }

    CounterSample sample(const JobRecord& job, NodeId, int core,
                         std::int64_t cycle_ts) override {
        const auto it = profiles_.find(job.app_tag);
        if (it == profiles_.end())
            throw Error("no workload profile for app tag " + job.app_tag);
        return sample_counters(it->second, job.job_id, core, cycle_ts, seed_);
    }

private:
    std::uint64_t seed_;
    std::map<std::string, WorkloadProfile> profiles_;
};

inline std::set<NodeId> down_nodes_at(const std::vector<FaultSpec>& faults,
                                      std::int64_t cycle_index) {
    std::set<NodeId> down;
    for (const FaultSpec& f : faults)
        if (f.from_cycle <= cycle_index && cycle_index <= f.to_cycle)
            down.insert(f.node);
    return down;
}

struct SimOutput {
    std::size_t job_count = 0;
    std::size_t cycle_count = 0;
    std::size_t record_count = 0;
    std::filesystem::path jobs_file;
    std::filesystem::path store_file;
};

/// Full pipeline: generate jobs, build the agent tree, run every cycle in
/// 0, interval, ..., <= horizon with the fault schedule applied, and persist
/// both files. Output bytes are identical for identical configs.
inline SimOutput run_simulation(const SimConfig& cfg, const std::filesystem::path& dir,
                                CounterSource* source_override = nullptr) {
    cfg.validate();
    std::filesystem::create_directories(dir);

    SimOutput out;
    out.jobs_file = dir / "jobs.tsv";
    out.store_file = dir / "properties.tsv";

    const std::vector<JobRecord> jobs = generate_jobs(cfg);
    write_jobs_tsv(out.jobs_file, jobs);
    out.job_count = jobs.size();

    std::filesystem::remove(out.store_file);
    PropertyStore store(out.store_file);

    const TreeTopology topo =
        build_tree(cfg.machine.node_count, cfg.collector_fanout, cfg.sync_fanout);
    const JobTable table(jobs, cfg.machine.cores_per_node);
    SimCounterSource default_source(cfg);
    CounterSource& source = source_override ? *source_override : default_source;

    const double deadline_s = static_cast<double>(cfg.interval_s) / 10.0;
    std::int64_t cycle_index = 0;
    for (std::int64_t ts = 0; ts <= cfg.horizon_s; ts += cfg.interval_s, ++cycle_index) {
        const std::set<NodeId> down = down_nodes_at(cfg.faults, cycle_index);
        const CycleResult result = run_cycle(topo, CycleId::aligned(ts, cfg.interval_s),
                                             table, source, deadline_s, down, cfg.seed);
        for (const CycleRecord& rec : result.records) {
            store.append({ts, rec.job_id, rec.metric, rec.summary});
            ++out.record_count;
        }
        ++out.cycle_count;
    }
    return out;
}

// --------------------------------------------------------------------------
// Config file parsing: flat `key = value` lines with [machine NAME],
// [profile NAME] and [fault] sections. `#` starts a comment.

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

inline double config_real(const std::string& value, long line) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty())
        throw ParseError("line " + std::to_string(line) + ": bad number '" + value + "'",
                         line);
    return v;
}

inline std::int64_t config_int(const std::string& value, long line) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end != value.c_str() + value.size() || value.empty())
        throw ParseError("line " + std::to_string(line) + ": bad integer '" + value + "'",
                         line);
    return v;
}

// "16:0.4, 64:0.35, 128:0.25"
inline std::vector<std::pair<int, double>> config_cores_dist(const std::string& value,
                                                             long line) {
    std::vector<std::pair<int, double>> dist;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        auto comma = value.find(',', pos);
        if (comma == std::string::npos)
            comma = value.size();
        const std::string entry = trim(value.substr(pos, comma - pos));
        if (!entry.empty()) {
            const auto colon = entry.find(':');
            if (colon == std::string::npos)
                dist.emplace_back(static_cast<int>(config_int(entry, line)), 1.0);
            else
                dist.emplace_back(
                    static_cast<int>(config_int(trim(entry.substr(0, colon)), line)),
                    config_real(trim(entry.substr(colon + 1)), line));
        }
        pos = comma + 1;
    }
    if (dist.empty())
        throw ParseError("line " + std::to_string(line) + ": empty core distribution",
                         line);
    return dist;
}

} // namespace detail

inline SimConfig parse_sim_config(std::istream& in) {
    SimConfig cfg;
    cfg.machine = machine_preset("phase1_thin");

    enum class Section { Top, Machine, Profile, Fault };
    Section section = Section::Top;
    ProfileGroup* group = nullptr;
    FaultSpec* fault = nullptr;

    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty())
            continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("line " + std::to_string(line_no) + ": unterminated section",
                                 line_no);
            const std::string head = detail::trim(line.substr(1, line.size() - 2));
            if (head.rfind("machine", 0) == 0) {
                const std::string name = detail::trim(head.substr(7));
                if (name.empty())
                    throw ParseError("line " + std::to_string(line_no) +
                                         ": machine section needs a name",
                                     line_no);
                cfg.machine = is_machine_preset(name) ? machine_preset(name)
                                                      : MachinePreset{name, 16, 64};
                section = Section::Machine;
            } else if (head.rfind("profile", 0) == 0) {
                const std::string name = detail::trim(head.substr(7));
                if (name.empty())
                    throw ParseError("line " + std::to_string(line_no) +
                                         ": profile section needs a name",
                                     line_no);
                cfg.groups.push_back({});
                group = &cfg.groups.back();
                group->profile.name = name;
                section = Section::Profile;
            } else if (head == "fault") {
                cfg.faults.push_back({});
                fault = &cfg.faults.back();
                section = Section::Fault;
            } else {
                throw ParseError("line " + std::to_string(line_no) + ": unknown section [" +
                                     head + "]",
                                 line_no);
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected key = value",
                             line_no);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        auto real = [&] { return detail::config_real(value, line_no); };
        auto integer = [&] { return detail::config_int(value, line_no); };

        switch (section) {
        case Section::Top:
            if (key == "seed")
                cfg.seed = static_cast<std::uint64_t>(integer());
            else if (key == "interval")
                cfg.interval_s = integer();
            else if (key == "horizon")
                cfg.horizon_s = integer();
            else if (key == "collector_fanout")
                cfg.collector_fanout = static_cast<int>(integer());
            else if (key == "sync_fanout")
                cfg.sync_fanout = static_cast<int>(integer());
            else
                throw ParseError("line " + std::to_string(line_no) + ": unknown key '" +
                                     key + "'",
                                 line_no);
            break;
        case Section::Machine:
            if (key == "cores_per_node")
                cfg.machine.cores_per_node = static_cast<int>(integer());
            else if (key == "node_count")
                cfg.machine.node_count = static_cast<int>(integer());
            else
                throw ParseError("line " + std::to_string(line_no) +
                                     ": unknown machine key '" + key + "'",
                                 line_no);
            break;
        case Section::Profile:
            if (key == "preset") {
                const std::string keep = group->profile.name;
                group->profile = workload_preset(value);
                group->profile.name = keep;
            } else if (key == "owner_group")
                group->owner_group = value;
            else if (key == "jobs")
                group->job_count = static_cast<int>(integer());
            else if (key == "cpi_mean")
                group->profile.cpi_mean = real();
            else if (key == "cpi_sd")
                group->profile.cpi_sd = real();
            else if (key == "mispredict_mean")
                group->profile.mispredict_mean = real();
            else if (key == "mispredict_sd")
                group->profile.mispredict_sd = real();
            else if (key == "flops_rate_mean")
                group->profile.flops_rate_mean = real();
            else if (key == "flops_rate_sd")
                group->profile.flops_rate_sd = real();
            else if (key == "avx_fraction_mean")
                group->profile.avx_fraction_mean = real();
            else if (key == "avx_fraction_sd")
                group->profile.avx_fraction_sd = real();
            else if (key == "runtime_median")
                group->profile.runtime_log_mu = std::log(real());
            else if (key == "runtime_log_mu")
                group->profile.runtime_log_mu = real();
            else if (key == "runtime_log_sigma")
                group->profile.runtime_log_sigma = real();
            else if (key == "cores")
                group->profile.cores_dist = detail::config_cores_dist(value, line_no);
            else
                throw ParseError("line " + std::to_string(line_no) +
                                     ": unknown profile key '" + key + "'",
                                 line_no);
            break;
        case Section::Fault:
            if (key == "node")
                fault->node = static_cast<NodeId>(integer());
            else if (key == "from")
                fault->from_cycle = integer();
            else if (key == "to")
                fault->to_cycle = integer();
            else
                throw ParseError("line " + std::to_string(line_no) +
                                     ": unknown fault key '" + key + "'",
                                 line_no);
            break;
        }
    }
    cfg.validate();
    return cfg;
}

inline SimConfig parse_sim_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoFailure("cannot open config " + path.string());
    return parse_sim_config(in);
}

} // namespace treemon
