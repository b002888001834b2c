#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

namespace prc {

// Maps measured items (biomarker columns) onto latent processes. Several items
// may load on one process; an item belongs to exactly one process.
class ItemMap {
public:
    ItemMap() = default;
    ItemMap(std::vector<std::string> items, std::vector<std::string> item_process);

    // One process per item, named after the item.
    static ItemMap identity(const std::vector<std::string>& items);

    std::size_t n_items() const { return items_.size(); }
    std::size_t n_processes() const { return processes_.size(); }

    const std::vector<std::string>& items() const { return items_; }
    const std::vector<std::string>& processes() const { return processes_; }

    // Process index of item q.
    int process_of(std::size_t item) const { return process_of_[item]; }
    const std::string& process_name_of(std::size_t item) const {
        return processes_[static_cast<std::size_t>(process_of_[item])];
    }
    // Item indices loading on process s, in item order.
    const std::vector<std::size_t>& items_of(std::size_t process) const {
        return items_of_[process];
    }
    std::size_t r(std::size_t process) const { return items_of_[process].size(); }

    bool contains(const std::string& item) const;
    std::size_t item_index(const std::string& item) const;

    // Restriction to a subset of items (e.g. the columns present in a data
    // file); processes are re-collected in first-seen order of `items`.
    ItemMap restricted_to(const std::vector<std::string>& items) const;

private:
    std::vector<std::string> items_;
    std::vector<std::string> processes_;
    std::vector<int> process_of_;
    std::vector<std::vector<std::size_t>> items_of_;
};

// Repeated measurements, one physical row per (subject, age) visit. Rows are
// grouped by subject (ids sorted), ages non-decreasing within a subject.
// Missing cells are NaN.
struct LongitudinalDataset {
    std::vector<std::string> items;          // column order
    std::vector<std::string> subjects;       // sorted unique ids
    std::vector<std::size_t> row_begin;      // size n_subjects()+1; rows of subject i
    std::vector<double> ages;                // per row
    Eigen::MatrixXd values;                  // n_rows x n_items, NaN = missing

    std::size_t n_subjects() const { return subjects.size(); }
    std::size_t n_rows() const { return ages.size(); }
    std::size_t visits(std::size_t subject) const {
        return row_begin[subject + 1] - row_begin[subject];
    }
};

// One row per subject: baseline age (absolute), follow-up time from baseline,
// event indicator. Sorted by subject id.
struct SurvivalDataset {
    std::vector<std::string> subjects;
    std::vector<double> baseline_age;
    std::vector<double> time;
    std::vector<int> status;

    std::size_t n() const { return subjects.size(); }
    std::size_t n_events() const;
    std::size_t n_censored() const { return n() - n_events(); }
};

// Longitudinal and survival tables over the identical subject set, in the same
// (sorted) subject order, with every measurement at or before the subject's
// event/censoring age.
struct AlignedData {
    LongitudinalDataset longit;
    SurvivalDataset surv;
};

ItemMap load_item_map(const std::string& path);
LongitudinalDataset load_longitudinal(const std::string& path, const ItemMap& map);
SurvivalDataset load_survival(const std::string& path);
AlignedData align(LongitudinalDataset longit, SurvivalDataset surv);

void write_item_map(const std::string& path, const ItemMap& map);
void write_longitudinal(const std::string& path, const LongitudinalDataset& data);
void write_survival(const std::string& path, const SurvivalDataset& data);

// In-memory construction used by simulators and tests; applies the same
// validation and ordering as the CSV loaders.
LongitudinalDataset make_longitudinal(std::vector<std::string> items,
                                      std::vector<std::string> row_subject,
                                      std::vector<double> row_age,
                                      Eigen::MatrixXd row_values);
SurvivalDataset make_survival(std::vector<std::string> subjects,
                              std::vector<double> baseline_age,
                              std::vector<double> time,
                              std::vector<int> status);

} // namespace prc
