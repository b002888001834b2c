#include "prc/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "prc/csv.hpp"
#include "prc/errors.hpp"

namespace prc {

// ---------------------------------------------------------------------------
// ItemMap
// ---------------------------------------------------------------------------

ItemMap::ItemMap(std::vector<std::string> items, std::vector<std::string> item_process)
    : items_(std::move(items)) {
    if (items_.size() != item_process.size()) {
        throw SchemaError("item map: item and process lists differ in length");
    }
    if (items_.empty()) throw SchemaError("item map is empty");
    std::unordered_map<std::string, int> process_index;
    std::unordered_set<std::string> seen_items;
    process_of_.reserve(items_.size());
    for (std::size_t q = 0; q < items_.size(); ++q) {
        if (items_[q].empty()) throw SchemaError("item map: empty item name");
        if (item_process[q].empty()) {
            throw SchemaError("item map: empty process name for item " + items_[q]);
        }
        if (!seen_items.insert(items_[q]).second) {
            throw SchemaError("item map: duplicate item " + items_[q]);
        }
        auto [it, inserted] = process_index.emplace(item_process[q],
                                                    static_cast<int>(processes_.size()));
        if (inserted) processes_.push_back(item_process[q]);
        process_of_.push_back(it->second);
    }
    items_of_.resize(processes_.size());
    for (std::size_t q = 0; q < items_.size(); ++q) {
        items_of_[static_cast<std::size_t>(process_of_[q])].push_back(q);
    }
}

ItemMap ItemMap::identity(const std::vector<std::string>& items) {
    return ItemMap(items, items);
}

bool ItemMap::contains(const std::string& item) const {
    return std::find(items_.begin(), items_.end(), item) != items_.end();
}

std::size_t ItemMap::item_index(const std::string& item) const {
    auto it = std::find(items_.begin(), items_.end(), item);
    if (it == items_.end()) throw SchemaError("unknown item: " + item);
    return static_cast<std::size_t>(it - items_.begin());
}

ItemMap ItemMap::restricted_to(const std::vector<std::string>& items) const {
    std::vector<std::string> procs;
    procs.reserve(items.size());
    for (const auto& item : items) {
        procs.push_back(process_name_of(item_index(item)));
    }
    return ItemMap(items, procs);
}

ItemMap load_item_map(const std::string& path) {
    csv::Table table = csv::read_file(path);
    std::size_t item_col = table.column_index("item");
    std::size_t proc_col = table.column_index("process");
    std::vector<std::string> items, procs;
    items.reserve(table.rows.size());
    procs.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        items.push_back(row[item_col]);
        procs.push_back(row[proc_col]);
    }
    return ItemMap(std::move(items), std::move(procs));
}

void write_item_map(const std::string& path, const ItemMap& map) {
    csv::Table table;
    table.header = {"item", "process"};
    for (std::size_t q = 0; q < map.n_items(); ++q) {
        table.rows.push_back({map.items()[q], map.process_name_of(q)});
    }
    csv::write_file(path, table);
}

// ---------------------------------------------------------------------------
// LongitudinalDataset
// ---------------------------------------------------------------------------

LongitudinalDataset make_longitudinal(std::vector<std::string> items,
                                      std::vector<std::string> row_subject,
                                      std::vector<double> row_age,
                                      Eigen::MatrixXd row_values) {
    const std::size_t n_rows = row_subject.size();
    if (row_age.size() != n_rows || static_cast<std::size_t>(row_values.rows()) != n_rows ||
        static_cast<std::size_t>(row_values.cols()) != items.size()) {
        throw SchemaError("longitudinal data: inconsistent row/column counts");
    }
    if (n_rows == 0) throw SchemaError("longitudinal data has no rows");
    {
        std::unordered_set<std::string> seen;
        for (const auto& item : items) {
            if (item.empty()) throw SchemaError("empty item name");
            if (!seen.insert(item).second) throw SchemaError("duplicate item column: " + item);
        }
    }
    for (std::size_t i = 0; i < n_rows; ++i) {
        if (row_subject[i].empty()) {
            throw SchemaError("empty subject id on row " + std::to_string(i + 1));
        }
        if (!std::isfinite(row_age[i])) {
            throw SchemaError("non-finite age for subject " + row_subject[i]);
        }
        bool any = false;
        for (Eigen::Index q = 0; q < row_values.cols(); ++q) {
            if (!std::isnan(row_values(static_cast<Eigen::Index>(i), q))) {
                any = true;
                break;
            }
        }
        if (!any) {
            throw SchemaError("subject " + row_subject[i] + ": row with no observed values");
        }
    }

    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (row_subject[a] != row_subject[b]) return row_subject[a] < row_subject[b];
        return row_age[a] < row_age[b];
    });

    LongitudinalDataset data;
    data.items = std::move(items);
    data.ages.resize(n_rows);
    data.values.resize(static_cast<Eigen::Index>(n_rows), row_values.cols());
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t src = order[r];
        data.ages[r] = row_age[src];
        data.values.row(static_cast<Eigen::Index>(r)) =
            row_values.row(static_cast<Eigen::Index>(src));
        if (r == 0 || row_subject[src] != data.subjects.back()) {
            data.subjects.push_back(row_subject[src]);
            data.row_begin.push_back(r);
        }
    }
    data.row_begin.push_back(n_rows);
    return data;
}

LongitudinalDataset load_longitudinal(const std::string& path, const ItemMap& map) {
    csv::Table table = csv::read_file(path);
    std::size_t subj_col = table.column_index("subject");
    std::size_t age_col = table.column_index("age");
    std::vector<std::string> items;
    std::vector<std::size_t> item_cols;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j == subj_col || j == age_col) continue;
        if (!map.contains(table.header[j])) {
            throw SchemaError("item column " + table.header[j] + " not in item map");
        }
        items.push_back(table.header[j]);
        item_cols.push_back(j);
    }
    if (items.empty()) throw SchemaError("longitudinal file has no item columns");

    const std::size_t n_rows = table.rows.size();
    std::vector<std::string> row_subject(n_rows);
    std::vector<double> row_age(n_rows);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(n_rows),
                           static_cast<Eigen::Index>(items.size()));
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& row = table.rows[r];
        const std::string where = "line " + std::to_string(r + 2);
        row_subject[r] = row[subj_col];
        row_age[r] = csv::parse_double(row[age_col], where + ", column age");
        if (std::isnan(row_age[r])) throw ParseError("missing age on " + where);
        for (std::size_t q = 0; q < item_cols.size(); ++q) {
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) =
                csv::parse_double(row[item_cols[q]], where + ", column " + items[q]);
        }
    }
    return make_longitudinal(std::move(items), std::move(row_subject), std::move(row_age),
                             std::move(values));
}

void write_longitudinal(const std::string& path, const LongitudinalDataset& data) {
    csv::Table table;
    table.header.push_back("subject");
    table.header.push_back("age");
    for (const auto& item : data.items) table.header.push_back(item);
    for (std::size_t i = 0; i < data.n_subjects(); ++i) {
        for (std::size_t r = data.row_begin[i]; r < data.row_begin[i + 1]; ++r) {
            std::vector<std::string> row;
            row.reserve(2 + data.items.size());
            row.push_back(data.subjects[i]);
            row.push_back(csv::format_double(data.ages[r]));
            for (std::size_t q = 0; q < data.items.size(); ++q) {
                row.push_back(csv::format_double(
                    data.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q))));
            }
            table.rows.push_back(std::move(row));
        }
    }
    csv::write_file(path, table);
}

// ---------------------------------------------------------------------------
// SurvivalDataset
// ---------------------------------------------------------------------------

std::size_t SurvivalDataset::n_events() const {
    std::size_t count = 0;
    for (int s : status) count += static_cast<std::size_t>(s);
    return count;
}

SurvivalDataset make_survival(std::vector<std::string> subjects,
                              std::vector<double> baseline_age,
                              std::vector<double> time,
                              std::vector<int> status) {
    const std::size_t n = subjects.size();
    if (baseline_age.size() != n || time.size() != n || status.size() != n) {
        throw SchemaError("survival data: inconsistent column lengths");
    }
    if (n == 0) throw SchemaError("survival data has no rows");
    for (std::size_t i = 0; i < n; ++i) {
        if (subjects[i].empty()) throw SchemaError("empty subject id in survival data");
        if (!std::isfinite(baseline_age[i])) {
            throw SchemaError("non-finite baseline_age for subject " + subjects[i]);
        }
        if (!(time[i] > 0.0) || !std::isfinite(time[i])) {
            throw DomainError("subject " + subjects[i] + ": time must be positive");
        }
        if (status[i] != 0 && status[i] != 1) {
            throw DomainError("subject " + subjects[i] + ": status must be 0 or 1");
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return subjects[a] < subjects[b]; });
    SurvivalDataset data;
    data.subjects.resize(n);
    data.baseline_age.resize(n);
    data.time.resize(n);
    data.status.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.subjects[i] = std::move(subjects[order[i]]);
        data.baseline_age[i] = baseline_age[order[i]];
        data.time[i] = time[order[i]];
        data.status[i] = status[order[i]];
        if (i > 0 && data.subjects[i] == data.subjects[i - 1]) {
            throw SchemaError("duplicate subject in survival data: " + data.subjects[i]);
        }
    }
    return data;
}

SurvivalDataset load_survival(const std::string& path) {
    csv::Table table = csv::read_file(path);
    std::size_t subj_col = table.column_index("subject");
    std::size_t age_col = table.column_index("baseline_age");
    std::size_t time_col = table.column_index("time");
    std::size_t status_col = table.column_index("status");
    std::vector<std::string> subjects;
    std::vector<double> baseline_age, time;
    std::vector<int> status;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "line " + std::to_string(r + 2);
        subjects.push_back(row[subj_col]);
        baseline_age.push_back(csv::parse_double(row[age_col], where + ", column baseline_age"));
        time.push_back(csv::parse_double(row[time_col], where + ", column time"));
        double s = csv::parse_double(row[status_col], where + ", column status");
        if (std::isnan(s) || (s != 0.0 && s != 1.0)) {
            throw DomainError("status must be 0 or 1 on " + where);
        }
        status.push_back(static_cast<int>(s));
        if (std::isnan(time.back())) throw ParseError("missing time on " + where);
        if (std::isnan(baseline_age.back())) {
            throw ParseError("missing baseline_age on " + where);
        }
    }
    return make_survival(std::move(subjects), std::move(baseline_age), std::move(time),
                         std::move(status));
}

void write_survival(const std::string& path, const SurvivalDataset& data) {
    csv::Table table;
    table.header = {"subject", "baseline_age", "time", "status"};
    for (std::size_t i = 0; i < data.n(); ++i) {
        table.rows.push_back({data.subjects[i], csv::format_double(data.baseline_age[i]),
                              csv::format_double(data.time[i]),
                              std::to_string(data.status[i])});
    }
    csv::write_file(path, table);
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

AlignedData align(LongitudinalDataset longit, SurvivalDataset surv) {
    if (longit.subjects != surv.subjects) {
        std::set<std::string> in_longit(longit.subjects.begin(), longit.subjects.end());
        std::set<std::string> in_surv(surv.subjects.begin(), surv.subjects.end());
        std::ostringstream msg;
        msg << "subject sets differ;";
        for (const auto& id : in_longit) {
            if (!in_surv.count(id)) msg << " longitudinal-only: " << id;
        }
        for (const auto& id : in_surv) {
            if (!in_longit.count(id)) msg << " survival-only: " << id;
        }
        throw AlignmentError(msg.str());
    }
    for (std::size_t i = 0; i < longit.n_subjects(); ++i) {
        const double limit = surv.baseline_age[i] + surv.time[i];
        for (std::size_t r = longit.row_begin[i]; r < longit.row_begin[i + 1]; ++r) {
            if (longit.ages[r] > limit) {
                throw AlignmentError("subject " + longit.subjects[i] + ": measurement at age " +
                                     csv::format_double(longit.ages[r]) +
                                     " is after follow-up end " + csv::format_double(limit));
            }
        }
    }
    return AlignedData{std::move(longit), std::move(surv)};
}

} // namespace prc
