#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "treemon/properties.hpp"
#include "treemon/quantiles.hpp"
#include "treemon/topology.hpp"

namespace treemon {

// One accounting row of the job table.
struct JobRecord {
    std::string job_id;
    std::string owner_group;
    std::string app_tag;
    int cores = 0;
    std::vector<NodeId> nodes;
    std::int64_t start_ts = 0;
    std::int64_t end_ts = 0;

    double runtime_s() const { return static_cast<double>(end_ts - start_ts); }
    bool active_at(std::int64_t ts) const { return start_ts <= ts && ts <= end_ts; }

    void validate(int cores_per_node) const {
        if (job_id.empty() || end_ts <= start_ts || cores < 1 || nodes.empty())
            throw InvalidRecord("job record violates its invariants: " + job_id);
        if (static_cast<long long>(cores) >
            static_cast<long long>(nodes.size()) * cores_per_node)
            throw InvalidRecord("job " + job_id + " has more cores than its nodes hold");
    }
};

// One persisted line of the property store.
struct StoreRecord {
    std::int64_t cycle_ts = 0;
    std::string job_id;
    PropertyKind metric = PropertyKind::Cpi;
    QuantileSummary summary;

    friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

/// Renders a real with 9 significant digits in scientific notation with a
/// compact exponent: 2.00000000e0, -1.25000000e-3. This fixed rendering is
/// the store's precision contract.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.8e", v);
    std::string s(buf);
    const auto e = s.find('e');
    std::string mantissa = s.substr(0, e);
    std::string exponent = s.substr(e + 1);
    bool negative = false;
    std::size_t i = 0;
    if (exponent[0] == '+' || exponent[0] == '-') {
        negative = exponent[0] == '-';
        i = 1;
    }
    while (i + 1 < exponent.size() && exponent[i] == '0')
        ++i;
    return mantissa + "e" + (negative ? "-" : "") + exponent.substr(i);
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto tab = line.find('\t', pos);
        fields.push_back(line.substr(pos, tab == std::string_view::npos ? tab : tab - pos));
        if (tab == std::string_view::npos)
            break;
        pos = tab + 1;
    }
    return fields;
}

inline double parse_real(std::string_view field, long index) {
    const std::string text(field);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || text.empty() || errno == ERANGE)
        throw ParseError("bad real in field " + std::to_string(index), index);
    return v;
}

inline std::int64_t parse_int(std::string_view field, long index) {
    const std::string text(field);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size() || text.empty() || errno == ERANGE)
        throw ParseError("bad integer in field " + std::to_string(index), index);
    return v;
}

} // namespace detail

/// Tab-separated record line: cycle_ts, job_id, metric token, count, min,
/// d0.1 .. d0.9, max. LF-terminated.
inline std::string encode_line(const StoreRecord& r) {
    std::string out = std::to_string(r.cycle_ts);
    out += '\t';
    out += r.job_id;
    out += '\t';
    out += property_token(r.metric);
    out += '\t';
    out += std::to_string(r.summary.count);
    out += '\t';
    out += format_real(r.summary.min);
    for (double d : r.summary.deciles) {
        out += '\t';
        out += format_real(d);
    }
    out += '\t';
    out += format_real(r.summary.max);
    out += '\n';
    return out;
}

/// Exact inverse of encode_line on encoder output. Throws ParseError with the
/// zero-based index of the offending field.
inline StoreRecord decode_line(std::string_view line) {
    if (!line.empty() && line.back() == '\n')
        line.remove_suffix(1);
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 15)
        throw ParseError("expected 15 fields, got " + std::to_string(fields.size()),
                         static_cast<long>(fields.size()));
    StoreRecord r;
    r.cycle_ts = detail::parse_int(fields[0], 0);
    r.job_id = std::string(fields[1]);
    if (r.job_id.empty())
        throw ParseError("empty job id", 1);
    const auto kind = parse_property_token(fields[2]);
    if (!kind)
        throw ParseError("unknown metric token '" + std::string(fields[2]) + "'", 2);
    r.metric = *kind;
    const std::int64_t count = detail::parse_int(fields[3], 3);
    if (count < 1)
        throw ParseError("count must be >= 1", 3);
    r.summary.count = static_cast<std::uint64_t>(count);
    r.summary.min = detail::parse_real(fields[4], 4);
    for (std::size_t i = 0; i < 9; ++i)
        r.summary.deciles[i] = detail::parse_real(fields[5 + i], static_cast<long>(5 + i));
    r.summary.max = detail::parse_real(fields[14], 14);
    return r;
}

/// Append-only property store over one text file. Single writer, any number
/// of readers; a record is visible once its line is flushed.
class PropertyStore {
public:
    explicit PropertyStore(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            for (const StoreRecord& r : scan(false))
                keys_.insert(key_of(r));
        }
    }

    const std::filesystem::path& path() const { return path_; }
    std::size_t size() const { return keys_.size(); }

    void append(const StoreRecord& r) {
        if (!r.summary.valid())
            throw InvalidRecord("store append: invalid summary for job " + r.job_id);
        if (r.job_id.empty())
            throw InvalidRecord("store append: empty job id");
        const auto key = key_of(r);
        if (keys_.count(key))
            throw DuplicateKey("store append: duplicate (cycle, job, metric) for " +
                               r.job_id);
        if (!out_.is_open()) {
            out_.open(path_, std::ios::app | std::ios::binary);
            if (!out_)
                throw IoFailure("cannot open store file " + path_.string());
        }
        out_ << encode_line(r);
        out_.flush();
        if (!out_)
            throw IoFailure("write failed on " + path_.string());
        keys_.insert(key);
    }

    struct Query {
        std::optional<std::string> job_id;                        // absent = ALL
        std::optional<PropertyKind> metric;                       // absent = ALL
        std::optional<std::pair<std::int64_t, std::int64_t>> time_range; // inclusive
    };

    /// All matching records sorted by cycle timestamp (stable, so append
    /// order is preserved within a cycle). In strict mode a corrupt line
    /// aborts with CorruptLine; otherwise it is skipped.
    std::vector<StoreRecord> query(const Query& q = {}, bool strict = true) const {
        std::vector<StoreRecord> out;
        for (StoreRecord& r : scan(strict)) {
            if (q.job_id && r.job_id != *q.job_id)
                continue;
            if (q.metric && r.metric != *q.metric)
                continue;
            if (q.time_range &&
                (r.cycle_ts < q.time_range->first || r.cycle_ts > q.time_range->second))
                continue;
            out.push_back(std::move(r));
        }
        std::stable_sort(out.begin(), out.end(),
                         [](const StoreRecord& a, const StoreRecord& b) {
                             return a.cycle_ts < b.cycle_ts;
                         });
        return out;
    }

private:
    using Key = std::tuple<std::int64_t, std::string, PropertyKind>;

    static Key key_of(const StoreRecord& r) { return {r.cycle_ts, r.job_id, r.metric}; }

    std::vector<StoreRecord> scan(bool strict) const {
        std::vector<StoreRecord> out;
        std::ifstream in(path_, std::ios::binary);
        if (!in)
            return out;
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            try {
                StoreRecord r = decode_line(line);
                if (!r.summary.valid())
                    throw ParseError("summary invariants violated", 4);
                out.push_back(std::move(r));
            } catch (const ParseError& e) {
                if (strict)
                    throw CorruptLine("line " + std::to_string(line_no) + ": " + e.what(),
                                      line_no);
            }
        }
        return out;
    }

    std::filesystem::path path_;
    std::set<Key> keys_;
    mutable std::ofstream out_;
};

inline constexpr std::string_view kJobsHeader =
    "job_id\towner_group\tapp_tag\tcores\tnodes\tstart_ts\tend_ts";

inline void write_jobs_tsv(const std::filesystem::path& path,
                           std::span<const JobRecord> jobs) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw IoFailure("cannot open job table " + path.string());
    out << kJobsHeader << '\n';
    for (const JobRecord& job : jobs) {
        out << job.job_id << '\t' << job.owner_group << '\t' << job.app_tag << '\t'
            << job.cores << '\t';
        for (std::size_t i = 0; i < job.nodes.size(); ++i) {
            if (i)
                out << ',';
            out << job.nodes[i];
        }
        out << '\t' << job.start_ts << '\t' << job.end_ts << '\n';
    }
    out.flush();
    if (!out)
        throw IoFailure("write failed on " + path.string());
}

inline std::vector<JobRecord> read_jobs_tsv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoFailure("cannot open job table " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kJobsHeader)
        throw CorruptLine("job table header mismatch", 1);
    std::vector<JobRecord> jobs;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 7)
            throw CorruptLine("line " + std::to_string(line_no) + ": expected 7 fields",
                              line_no);
        JobRecord job;
        job.job_id = std::string(fields[0]);
        job.owner_group = std::string(fields[1]);
        job.app_tag = std::string(fields[2]);
        job.cores = static_cast<int>(detail::parse_int(fields[3], 3));
        std::string_view nodes = fields[4];
        while (!nodes.empty()) {
            const auto comma = nodes.find(',');
            job.nodes.push_back(
                static_cast<NodeId>(detail::parse_int(nodes.substr(0, comma), 4)));
            if (comma == std::string_view::npos)
                break;
            nodes.remove_prefix(comma + 1);
        }
        job.start_ts = detail::parse_int(fields[5], 5);
        job.end_ts = detail::parse_int(fields[6], 6);
        jobs.push_back(std::move(job));
    }
    return jobs;
}

} // namespace treemon
