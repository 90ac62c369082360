#pragma once

// Table-driven surrogate. Sample tables are keyed by (patient, feature,
// sample index); risk tables by (patient, evidence hash, draw index). The
// patient id "*" acts as a wildcard row shared by every patient.
//
// File format, one tab-separated record per line, '#' starts a comment:
//   sample  <patient>  <feature>        <index>  <value>
//   risk    <patient>  <evidence-hash>  <index>  <probability>
//   global  -          -                <rank>   <feature>

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diagbed/belief.hpp"
#include "diagbed/surrogate.hpp"

namespace diagbed {

inline constexpr const char* kAnyPatient = "*";

class ScriptedSurrogate final : public Surrogate {
public:
    ScriptedSurrogate() = default;

    void add_samples(const std::string& patient, const std::string& feature, const std::vector<FeatureValue>& values) {
        auto& slot = samples_[{patient, feature}];
        for (const auto& v : values) slot.push_back(to_text(v));
    }

    void add_risk(const std::string& patient, const Evidence& evidence, const std::vector<double>& values) {
        add_risk_by_hash(patient, evidence_hash(evidence), values);
    }

    void add_risk_by_hash(const std::string& patient, const std::string& hash, const std::vector<double>& values) {
        auto& slot = risks_[{patient, hash}];
        slot.insert(slot.end(), values.begin(), values.end());
    }

    void set_global(std::vector<std::string> ranking) { global_ = std::move(ranking); }

    static ScriptedSurrogate parse(std::string_view text) {
        ScriptedSurrogate s;
        // Index columns give positions; collect then order.
        std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::string>> samples;
        std::map<std::pair<std::string, std::string>, std::map<std::size_t, double>> risks;
        std::map<std::size_t, std::string> global;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty() || trim(line).front() == '#') continue;
            std::vector<std::string> cols;
            std::istringstream ls(line);
            for (std::string col; std::getline(ls, col, '\t');) cols.push_back(col);
            if (cols.size() != 5) {
                throw Error(ErrorKind::Parse, "scripted table line " + std::to_string(line_no) + ": expected 5 columns");
            }
            double idx = 0.0;
            if (!parse_real(cols[3], idx) || idx < 0 || std::floor(idx) != idx) {
                throw Error(ErrorKind::Parse, "scripted table line " + std::to_string(line_no) + ": bad index");
            }
            const auto index = static_cast<std::size_t>(idx);
            if (cols[0] == "sample") {
                samples[{cols[1], cols[2]}][index] = cols[4];
            } else if (cols[0] == "risk") {
                double p = 0.0;
                if (!parse_real(cols[4], p)) {
                    throw Error(ErrorKind::Parse, "scripted table line " + std::to_string(line_no) + ": bad risk");
                }
                risks[{cols[1], cols[2]}][index] = p;
            } else if (cols[0] == "global") {
                global[index] = cols[4];
            } else {
                throw Error(ErrorKind::Parse, "scripted table line " + std::to_string(line_no) + ": unknown kind");
            }
        }
        for (auto& [key, by_index] : samples) {
            for (auto& [i, v] : by_index) s.samples_[key].push_back(v);
        }
        for (auto& [key, by_index] : risks) {
            for (auto& [i, v] : by_index) s.risks_[key].push_back(v);
        }
        for (auto& [i, f] : global) s.global_.push_back(f);
        return s;
    }

    static ScriptedSurrogate load(const std::filesystem::path& path) { return parse(read_file(path)); }

    std::string serialize() const {
        std::string out = "# kind\tpatient\tkey\tindex\tvalue\n";
        for (const auto& [key, values] : samples_) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                out += "sample\t" + key.first + "\t" + key.second + "\t" + std::to_string(i) + "\t" + values[i] + "\n";
            }
        }
        for (const auto& [key, values] : risks_) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                out += "risk\t" + key.first + "\t" + key.second + "\t" + std::to_string(i) + "\t" +
                       format_real(values[i]) + "\n";
            }
        }
        for (std::size_t i = 0; i < global_.size(); ++i) {
            out += "global\t-\t-\t" + std::to_string(i) + "\t" + global_[i] + "\n";
        }
        return out;
    }

    std::vector<OutcomeSample> sample_outcomes(const SurrogateContext& ctx, const std::string& feature, std::size_t m,
                                               std::uint64_t /*seed*/) override {
        detail::require_unobserved(ctx, feature);
        const auto& spec = ctx.schema->at(feature);
        const auto& values = lookup(samples_, ctx.patient_id, feature, "no scripted samples for " + feature);
        counter_.add_sample(m);
        std::vector<OutcomeSample> out;
        out.reserve(m);
        for (std::size_t j = 0; j < m; ++j) {
            const auto& raw = values[j % values.size()];
            out.push_back({feature, validate_value(spec, FeatureValue{raw}), raw, 1.0});
        }
        return out;
    }

    double estimate_risk(const SurrogateContext& ctx, std::uint64_t /*seed*/, std::size_t index) override {
        counter_.add_risk();
        return table_risk(ctx, index);
    }

    /// Picks the unknown feature with the largest expected KL implied by the tables.
    std::string implicit_select(const SurrogateContext& ctx, const std::vector<std::string>& unknown,
                                std::uint64_t /*seed*/) override {
        if (unknown.empty()) throw Error(ErrorKind::InvalidArgument, "no candidate features");
        counter_.add_selection();
        if (unknown.size() == 1) return unknown.front();
        const Belief prior(mean_risk(ctx));
        std::string best;
        double best_kl = -1.0;
        for (const auto& feature : unknown) {
            const auto* values = find(samples_, ctx.patient_id, feature);
            if (!values) continue;
            std::vector<double> posts;
            try {
                for (const auto& raw : *values) {
                    const auto value = validate_value(ctx.schema->at(feature), FeatureValue{raw});
                    posts.push_back(mean_risk(ctx.extended(feature, value)));
                }
            } catch (const Error&) {
                continue;
            }
            const double kl = expected_kl(posts, prior);
            if (kl > best_kl) {
                best_kl = kl;
                best = feature;
            }
        }
        if (best.empty()) throw Error(ErrorKind::Parse, "invalid selection", {}, "no scripted evidence for candidates");
        return best;
    }

    std::vector<std::string> global_select(const DatasetSchema& /*schema*/, const std::vector<std::string>& all,
                                           std::size_t n) override {
        if (n > all.size()) throw Error(ErrorKind::InvalidArgument, "n exceeds the number of features");
        counter_.add_selection();
        std::vector<std::string> out;
        for (const auto& f : global_) {
            if (out.size() == n) break;
            if (std::find(all.begin(), all.end(), f) != all.end() &&
                std::find(out.begin(), out.end(), f) == out.end()) {
                out.push_back(f);
            }
        }
        for (const auto& f : all) {
            if (out.size() == n) break;
            if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
        }
        return out;
    }

private:
    using Key = std::pair<std::string, std::string>;

    template <typename T>
    static const std::vector<T>* find(const std::map<Key, std::vector<T>>& table, const std::string& patient,
                                      const std::string& key) {
        auto it = table.find({patient, key});
        if (it == table.end()) it = table.find({kAnyPatient, key});
        if (it == table.end() || it->second.empty()) return nullptr;
        return &it->second;
    }

    template <typename T>
    static const std::vector<T>& lookup(const std::map<Key, std::vector<T>>& table, const std::string& patient,
                                        const std::string& key, const std::string& message) {
        if (const auto* v = find(table, patient, key)) return *v;
        throw Error(ErrorKind::NotFound, message + " (patient " + patient + ")");
    }

    double table_risk(const SurrogateContext& ctx, std::size_t index) const {
        const auto& values = lookup(risks_, ctx.patient_id, evidence_hash(ctx.known),
                                    "no scripted risk for evidence {" + canonical_evidence(ctx.known) + "}");
        return std::clamp(values[index % values.size()], 0.0, 1.0);
    }

    double mean_risk(const SurrogateContext& ctx) const {
        const auto& values = lookup(risks_, ctx.patient_id, evidence_hash(ctx.known),
                                    "no scripted risk for evidence {" + canonical_evidence(ctx.known) + "}");
        double sum = 0.0;
        for (double v : values) sum += std::clamp(v, 0.0, 1.0);
        return sum / static_cast<double>(values.size());
    }

    std::map<Key, std::vector<std::string>> samples_;
    std::map<Key, std::vector<double>> risks_;
    std::vector<std::string> global_;
};

}  // namespace diagbed
