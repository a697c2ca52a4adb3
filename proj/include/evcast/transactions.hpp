#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evcast/calendar.hpp"
#include "evcast/csv.hpp"
#include "evcast/errors.hpp"

namespace evcast {

enum class TrialStage { Uncontrolled = 0, T1, T2, T3 };
enum class EvType { BEV = 0, PHEV, REX };

inline constexpr const char* kTrialNames[4] = {"Uncontrolled", "T1", "T2", "T3"};
inline constexpr const char* kEvTypeNames[3] = {"BEV", "PHEV", "REX"};

/// One charging session row.
struct ChargingTransaction {
    std::string charger_id;
    std::string participant_id;
    double car_kw = 0.0;        // power rating of battery
    double car_kwh = 0.0;       // energy capacity of battery
    std::string group_id;
    TrialStage trial_stage = TrialStage::Uncontrolled;
    Timestamp plug_in{};
    Timestamp plug_out{};
    double consumed_kwh = 0.0;
    Timestamp active_start{};
    std::string car_make;       // optional
    std::string car_model;      // optional
    EvType ev_type = EvType::BEV;
};

struct Reject {
    long row;            // 1-based data row index (header excluded)
    std::string reason;
};

struct RejectReport {
    std::vector<Reject> rejects;

    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : rejects) {
            out += "{\"row\": " + std::to_string(r.row) + ", \"reason\": \"" + r.reason + "\"}\n";
        }
        return out;
    }
};

struct ParseResult {
    std::vector<ChargingTransaction> records;
    RejectReport rejects;
};

/// Maps canonical field names to the input's column headers. Defaults to the
/// canonical names themselves.
struct ColumnMap {
    std::map<std::string, std::string> names;

    std::string col(const std::string& field) const {
        auto it = names.find(field);
        return it == names.end() ? field : it->second;
    }
};

inline constexpr const char* kTransactionFields[13] = {
    "charger_id", "participant_id", "car_kw",       "car_kwh",   "group_id",
    "trial_stage", "plug_in",        "plug_out",     "consumed_kwh", "active_start",
    "car_make",   "car_model",      "ev_type"};

namespace detail {

inline std::optional<TrialStage> parse_trial(const std::string& s) {
    for (int i = 0; i < 4; ++i)
        if (s == kTrialNames[i]) return static_cast<TrialStage>(i);
    // Accept the bare stage numbers used in trial exports.
    if (s == "0") return TrialStage::Uncontrolled;
    if (s == "1") return TrialStage::T1;
    if (s == "2") return TrialStage::T2;
    if (s == "3") return TrialStage::T3;
    return std::nullopt;
}

inline std::optional<EvType> parse_ev_type(const std::string& s) {
    for (int i = 0; i < 3; ++i)
        if (s == kEvTypeNames[i]) return static_cast<EvType>(i);
    return std::nullopt;
}

inline std::optional<double> parse_number(const std::string& s) {
    try {
        return csv::parse_double(s);
    } catch (const DataError&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Parses a delimited stream into typed records. A malformed header is fatal;
/// malformed rows are rejected with a reason code and parsing continues.
/// |records| + |rejects| equals the number of data rows.
inline ParseResult parse_transactions(std::istream& in, const ColumnMap& map = {}) {
    const csv::Table table = csv::read_table(in);

    int idx[13];
    for (int i = 0; i < 13; ++i) {
        idx[i] = table.column(map.col(kTransactionFields[i]));
        if (idx[i] < 0)
            throw DataError(std::string("transactions: header is missing column '") +
                            map.col(kTransactionFields[i]) + "'");
    }

    ParseResult result;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const long rownum = static_cast<long>(r) + 1;
        auto reject = [&](const std::string& reason) {
            result.rejects.rejects.push_back({rownum, reason});
        };
        if (row.size() != table.header.size()) {
            reject("field-count");
            continue;
        }
        auto field = [&](int f) -> const std::string& { return row[static_cast<std::size_t>(idx[f])]; };

        ChargingTransaction t;
        t.charger_id = field(0);
        t.participant_id = field(1);
        t.group_id = field(4);
        t.car_make = field(10);   // optional, may be empty
        t.car_model = field(11);

        if (t.participant_id.empty()) {
            reject("missing-participant");
            continue;
        }

        const auto kw = detail::parse_number(field(2));
        const auto kwh = detail::parse_number(field(3));
        const auto consumed = detail::parse_number(field(8));
        if (!kw || !kwh || !consumed) {
            reject("bad-number");
            continue;
        }
        t.car_kw = *kw;
        t.car_kwh = *kwh;
        t.consumed_kwh = *consumed;

        const auto trial = detail::parse_trial(field(5));
        const auto ev = detail::parse_ev_type(field(12));
        if (!trial || !ev) {
            reject("bad-enum");
            continue;
        }
        t.trial_stage = *trial;
        t.ev_type = *ev;

        const auto plug_in = parse_timestamp(field(6));
        const auto plug_out = parse_timestamp(field(7));
        const auto active = parse_timestamp(field(9));
        if (!plug_in || !plug_out || !active) {
            reject("bad-timestamp");
            continue;
        }
        t.plug_in = *plug_in;
        t.plug_out = *plug_out;
        t.active_start = *active;

        if (t.car_kwh <= 0.0 || t.car_kw <= 0.0) {
            reject("nonpositive-rating");
            continue;
        }
        if (!(t.plug_in <= t.active_start && t.active_start <= t.plug_out)) {
            reject("time-order");
            continue;
        }
        if (t.consumed_kwh < 0.0 || t.consumed_kwh > t.car_kwh) {
            reject("consumed-range");
            continue;
        }
        result.records.push_back(std::move(t));
    }
    return result;
}

/// Drops trial-3 sessions. Order preserved; idempotent.
inline std::vector<ChargingTransaction> clean_trial_data(std::vector<ChargingTransaction> txns) {
    std::vector<ChargingTransaction> out;
    out.reserve(txns.size());
    for (auto& t : txns)
        if (t.trial_stage != TrialStage::T3) out.push_back(std::move(t));
    return out;
}

inline void write_transactions(std::ostream& out, const std::vector<ChargingTransaction>& txns) {
    std::vector<std::string> header(kTransactionFields, kTransactionFields + 13);
    csv::write_row(out, header);
    for (const auto& t : txns) {
        csv::write_row(out, {t.charger_id, t.participant_id, csv::fmt_double(t.car_kw),
                             csv::fmt_double(t.car_kwh), t.group_id, kTrialNames[static_cast<int>(t.trial_stage)],
                             format_timestamp(t.plug_in), format_timestamp(t.plug_out),
                             csv::fmt_double(t.consumed_kwh), format_timestamp(t.active_start), t.car_make,
                             t.car_model, kEvTypeNames[static_cast<int>(t.ev_type)]});
    }
}

}  // namespace evcast
