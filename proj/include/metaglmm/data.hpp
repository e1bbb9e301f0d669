#ifndef METAGLMM_DATA_HPP
#define METAGLMM_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaglmm/family.hpp"

namespace metaglmm {

// One aggregate observation. For Poisson rate records `n` holds the total
// person-time and `ybar` the event rate per unit time; for the other
// families `n` is the subject count and `ybar` the sample mean.
struct StudyRecord {
    std::string study_id;
    std::string record_id;
    std::vector<double> x;             // covariates, x[0] == 1 by convention
    double n = 0.0;
    double ybar = 0.0;
    std::optional<double> s2;          // sample variance
    std::optional<double> phi_hat;     // plug-in dispersion
};

struct Dataset {
    FamilySpec family;
    std::vector<StudyRecord> records;
    std::size_t p = 0;

    std::size_t size() const { return records.size(); }

    void validate() const {
        family.validate();
        if (records.size() < 2)
            throw std::invalid_argument("dataset needs at least 2 records, got " +
                                        std::to_string(records.size()));
        for (std::size_t i = 0; i < records.size(); ++i) {
            const StudyRecord& r = records[i];
            if (r.x.size() != p)
                throw std::invalid_argument("record " + std::to_string(i + 1) +
                                            ": covariate length mismatch");
            switch (family.kind) {
                case FamilyKind::Binomial: {
                    if (!(r.ybar >= 0.0 && r.ybar <= 1.0))
                        throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                    ": binomial mean outside [0,1]");
                    const double events = r.n * r.ybar;
                    if (std::abs(events - std::round(events)) > 1e-9)
                        throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                    ": n*ybar is not an integer");
                    break;
                }
                case FamilyKind::Poisson:
                    if (!(r.ybar >= 0.0) || !(r.n > 0.0))
                        throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                    ": invalid poisson rate record");
                    break;
                case FamilyKind::Gamma: {
                    if (!(r.ybar > 0.0) || !r.s2 || !(*r.s2 > 0.0))
                        throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                    ": gamma record needs positive mean and variance");
                    if (r.phi_hat) {
                        const double expect = *r.s2 / (r.ybar * r.ybar);
                        if (std::abs(*r.phi_hat - expect) > 1e-12 * std::max(1.0, expect))
                            throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                        ": dispersion inconsistent with s2/ybar^2");
                    }
                    break;
                }
                case FamilyKind::Normal:
                    if (!r.s2 || !(*r.s2 > 0.0))
                        throw std::invalid_argument("record " + std::to_string(i + 1) +
                                                    ": normal record needs a positive variance");
                    break;
            }
        }
    }
};

// Plug-in dispersion: gamma uses the moment estimate s2 / ybar^2, binomial
// and Poisson need none, normal carries the reported variance.
inline StudyRecord plugin_dispersion(StudyRecord r, const FamilySpec& family) {
    switch (family.kind) {
        case FamilyKind::Gamma:
            if (!r.s2 || !(*r.s2 > 0.0) || !(r.ybar > 0.0))
                throw std::invalid_argument("plugin_dispersion: gamma record '" + r.record_id +
                                            "' needs ybar > 0 and s2 > 0");
            r.phi_hat = *r.s2 / (r.ybar * r.ybar);
            break;
        case FamilyKind::Binomial:
        case FamilyKind::Poisson:
            r.phi_hat = 1.0;
            break;
        case FamilyKind::Normal:
            if (!r.s2 || !(*r.s2 > 0.0))
                throw std::invalid_argument("plugin_dispersion: normal record '" + r.record_id +
                                            "' needs a positive variance");
            r.phi_hat = *r.s2;
            break;
    }
    return r;
}

// Column-name mapping for CSV ingestion; defaults follow the documented
// schemas. Any header column not claimed by the active schema is read as a
// covariate, in header order.
struct CsvSchema {
    std::string study = "study";
    std::string arm = "arm";
    std::string n = "n";
    std::string events = "events";
    std::string person_time = "person_time";
    std::string mean = "mean";
    std::string sd = "sd";
    std::string estimate = "estimate";
    std::string variance = "variance";
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_number(const std::string& cell, const std::string& col, std::size_t row) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("row " + std::to_string(row) + ": non-numeric value '" + cell +
                                    "' in column '" + col + "'");
    }
}

inline std::string format_sig12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

inline Dataset load_csv(const std::string& path, const FamilySpec& family,
                        const CsvSchema& schema = CsvSchema()) {
    family.validate();
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("no records in '" + path + "': missing header");
    const std::vector<std::string> header = detail::split_csv_line(line);

    auto col_index = [&](const std::string& name, bool required) -> long {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<long>(i);
        if (required)
            throw std::invalid_argument("missing column '" + name + "' in '" + path + "'");
        return -1;
    };

    std::vector<std::string> roles;
    roles.push_back(schema.study);
    switch (family.kind) {
        case FamilyKind::Binomial:
            roles.insert(roles.end(), {schema.arm, schema.n, schema.events});
            break;
        case FamilyKind::Poisson:
            roles.insert(roles.end(), {schema.person_time, schema.events});
            break;
        case FamilyKind::Gamma:
            roles.insert(roles.end(), {schema.arm, schema.n, schema.mean, schema.sd});
            break;
        case FamilyKind::Normal:
            roles.insert(roles.end(), {schema.estimate, schema.variance});
            break;
    }
    std::map<std::string, long> idx;
    for (const std::string& r : roles) idx[r] = col_index(r, true);

    std::vector<std::size_t> covariate_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        bool is_role = false;
        for (const std::string& r : roles)
            if (header[i] == r) { is_role = true; break; }
        if (!is_role) covariate_cols.push_back(i);
    }

    Dataset ds;
    ds.family = family;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                        std::to_string(header.size()) + " cells, got " +
                                        std::to_string(cells.size()));
        auto cell_num = [&](const std::string& role) {
            return detail::parse_number(cells[static_cast<std::size_t>(idx[role])], role, row);
        };
        StudyRecord rec;
        rec.study_id = cells[static_cast<std::size_t>(idx[schema.study])];
        rec.x.push_back(1.0);
        switch (family.kind) {
            case FamilyKind::Binomial: {
                const double arm = cell_num(schema.arm);
                rec.n = cell_num(schema.n);
                const double events = cell_num(schema.events);
                if (!(rec.n > 0.0))
                    throw std::invalid_argument("row " + std::to_string(row) + ": n must be positive");
                rec.ybar = events / rec.n;
                rec.record_id = rec.study_id + "/" + detail::format_sig12(arm);
                rec.x.push_back(arm);
                break;
            }
            case FamilyKind::Poisson: {
                rec.n = cell_num(schema.person_time);
                const double events = cell_num(schema.events);
                if (!(rec.n > 0.0))
                    throw std::invalid_argument("row " + std::to_string(row) +
                                                ": person_time must be positive");
                rec.ybar = events / rec.n;
                rec.record_id = rec.study_id;
                break;
            }
            case FamilyKind::Gamma: {
                const double arm = cell_num(schema.arm);
                rec.n = cell_num(schema.n);
                rec.ybar = cell_num(schema.mean);
                const double sd = cell_num(schema.sd);
                rec.s2 = sd * sd;
                rec.record_id = rec.study_id + "/" + detail::format_sig12(arm);
                rec.x.push_back(arm);
                break;
            }
            case FamilyKind::Normal: {
                rec.n = 1.0;
                rec.ybar = cell_num(schema.estimate);
                rec.s2 = cell_num(schema.variance);
                rec.record_id = rec.study_id;
                break;
            }
        }
        for (std::size_t c : covariate_cols)
            rec.x.push_back(detail::parse_number(cells[c], header[c], row));
        try {
            rec = plugin_dispersion(std::move(rec), family);
        } catch (const std::exception& e) {
            throw std::invalid_argument("row " + std::to_string(row) + ": " + e.what());
        }
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty())
        throw std::invalid_argument("no records in '" + path + "'");
    ds.p = ds.records.front().x.size();
    ds.validate();
    return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path,
                      const CsvSchema& schema = CsvSchema()) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    using detail::format_sig12;
    std::size_t extra = 0;
    switch (ds.family.kind) {
        case FamilyKind::Binomial:
            out << schema.study << ',' << schema.arm << ',' << schema.n << ',' << schema.events;
            extra = 2;
            break;
        case FamilyKind::Poisson:
            out << schema.study << ',' << schema.person_time << ',' << schema.events;
            extra = 1;
            break;
        case FamilyKind::Gamma:
            out << schema.study << ',' << schema.arm << ',' << schema.n << ',' << schema.mean << ','
                << schema.sd;
            extra = 2;
            break;
        case FamilyKind::Normal:
            out << schema.study << ',' << schema.estimate << ',' << schema.variance;
            extra = 1;
            break;
    }
    const std::size_t p = ds.p;
    for (std::size_t j = extra; j < p; ++j) out << ",x" << j;
    out << '\n';
    for (const StudyRecord& r : ds.records) {
        out << r.study_id;
        switch (ds.family.kind) {
            case FamilyKind::Binomial:
                out << ',' << format_sig12(r.x.at(1)) << ',' << format_sig12(r.n) << ','
                    << format_sig12(r.n * r.ybar);
                break;
            case FamilyKind::Poisson:
                out << ',' << format_sig12(r.n) << ',' << format_sig12(r.n * r.ybar);
                break;
            case FamilyKind::Gamma:
                out << ',' << format_sig12(r.x.at(1)) << ',' << format_sig12(r.n) << ','
                    << format_sig12(r.ybar) << ',' << format_sig12(std::sqrt(r.s2.value()));
                break;
            case FamilyKind::Normal:
                out << ',' << format_sig12(r.ybar) << ',' << format_sig12(r.s2.value());
                break;
        }
        for (std::size_t j = extra; j < p; ++j) out << ',' << format_sig12(r.x.at(j));
        out << '\n';
    }
}

// Normalize per-arm records into the two-arm layout: every study must supply
// both arms (x[1] in {0,1}); output keeps study order of first appearance,
// control arm first. Each record keeps its own independent random effect.
inline Dataset expand_two_arm(const Dataset& per_arm) {
    if (per_arm.p < 2)
        throw std::invalid_argument("expand_two_arm: records carry no arm indicator");
    struct Pair {
        const StudyRecord* arm0 = nullptr;
        const StudyRecord* arm1 = nullptr;
    };
    std::vector<std::string> order;
    std::map<std::string, Pair> by_study;
    for (const StudyRecord& r : per_arm.records) {
        const double z = r.x[1];
        if (z != 0.0 && z != 1.0)
            throw std::invalid_argument("expand_two_arm: study '" + r.study_id +
                                        "' has arm indicator " + std::to_string(z) +
                                        ", expected 0 or 1");
        auto it = by_study.find(r.study_id);
        if (it == by_study.end()) {
            order.push_back(r.study_id);
            it = by_study.emplace(r.study_id, Pair{}).first;
        }
        const StudyRecord*& slot = (z == 0.0) ? it->second.arm0 : it->second.arm1;
        if (slot)
            throw std::invalid_argument("expand_two_arm: study '" + r.study_id +
                                        "' has a duplicate arm");
        slot = &r;
    }
    Dataset out;
    out.family = per_arm.family;
    out.p = per_arm.p;
    for (const std::string& id : order) {
        const Pair& pr = by_study[id];
        if (!pr.arm0 || !pr.arm1)
            throw std::invalid_argument("expand_two_arm: study '" + id + "' is missing arm " +
                                        (pr.arm0 ? "1" : "0"));
        out.records.push_back(*pr.arm0);
        out.records.push_back(*pr.arm1);
    }
    out.validate();
    return out;
}

} // namespace metaglmm

#endif
