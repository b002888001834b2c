#include "prc/ranef.hpp"

#include <algorithm>

#include "prc/errors.hpp"

namespace prc {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::BASELINE_PCOX: return "baseline_pcox";
        case Variant::PRC_LMM: return "prc_lmm";
        case Variant::PRC_MLPMM_U: return "prc_mlpmm_u";
        case Variant::PRC_MLPMM_UB: return "prc_mlpmm_ub";
    }
    throw DomainError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "baseline_pcox") return Variant::BASELINE_PCOX;
    if (name == "prc_lmm") return Variant::PRC_LMM;
    if (name == "prc_mlpmm_u") return Variant::PRC_MLPMM_U;
    if (name == "prc_mlpmm_ub") return Variant::PRC_MLPMM_UB;
    throw DomainError("unknown variant: " + name);
}

RanefSummary build_ranef_summary(const std::vector<LmmFit>& fits,
                                 const LongitudinalDataset& data) {
    if (fits.empty()) throw SchemaError("no item fits supplied");
    RanefSummary out;
    out.variant = Variant::PRC_LMM;
    const auto n = static_cast<Eigen::Index>(data.n_subjects());
    out.matrix.resize(n, static_cast<Eigen::Index>(2 * fits.size()));
    out.uninformed_units.assign(data.n_subjects(), 0);
    for (std::size_t k = 0; k < fits.size(); ++k) {
        auto it = std::find(data.items.begin(), data.items.end(), fits[k].item);
        if (it == data.items.end()) {
            throw SchemaError("fitted item " + fits[k].item + " absent from dataset");
        }
        const auto item = static_cast<std::size_t>(it - data.items.begin());
        RanefPrediction pred = predict_ranef_lmm(fits[k], data, item);
        out.matrix.col(static_cast<Eigen::Index>(2 * k)) = pred.effects.col(0);
        out.matrix.col(static_cast<Eigen::Index>(2 * k + 1)) = pred.effects.col(1);
        out.columns.push_back("b0_" + fits[k].item);
        out.columns.push_back("b1_" + fits[k].item);
        for (std::size_t i = 0; i < data.n_subjects(); ++i) {
            if (!pred.informed[i]) out.uninformed_units[i] += 1;
        }
    }
    return out;
}

RanefSummary build_ranef_summary(const std::vector<MlpmmFit>& fits,
                                 const LongitudinalDataset& data, const ItemMap& map,
                                 Variant variant) {
    if (variant != Variant::PRC_MLPMM_U && variant != Variant::PRC_MLPMM_UB) {
        throw DomainError("variant must be a latent-process summary");
    }
    if (fits.size() != map.n_processes()) {
        throw SchemaError("expected one fit per process, got " + std::to_string(fits.size()) +
                          " for " + std::to_string(map.n_processes()) + " processes");
    }
    const bool keep_b = variant == Variant::PRC_MLPMM_UB;
    RanefSummary out;
    out.variant = variant;
    const auto n = static_cast<Eigen::Index>(data.n_subjects());
    std::size_t d = 2 * map.n_processes();
    if (keep_b) {
        for (std::size_t s = 0; s < map.n_processes(); ++s) d += map.r(s) - 1;
    }
    out.matrix.resize(n, static_cast<Eigen::Index>(d));
    out.uninformed_units.assign(data.n_subjects(), 0);

    Eigen::Index col = 0;
    for (std::size_t s = 0; s < map.n_processes(); ++s) {
        std::vector<std::string> expected;
        for (std::size_t q : map.items_of(s)) expected.push_back(map.items()[q]);
        if (fits[s].items != expected) {
            throw SchemaError("fit " + std::to_string(s) + " does not cover process " +
                              map.processes()[s]);
        }
        RanefPrediction pred = predict_ranef_mlpmm(fits[s], data, map, s);
        out.matrix.col(col) = pred.effects.col(0);
        out.matrix.col(col + 1) = pred.effects.col(1);
        out.columns.push_back("u0_" + map.processes()[s]);
        out.columns.push_back("u1_" + map.processes()[s]);
        col += 2;
        if (keep_b) {
            for (std::size_t q = 1; q < fits[s].items.size(); ++q) {
                out.matrix.col(col) = pred.effects.col(static_cast<Eigen::Index>(2 + q));
                out.columns.push_back("b_" + fits[s].items[q]);
                ++col;
            }
        }
        for (std::size_t i = 0; i < data.n_subjects(); ++i) {
            if (!pred.informed[i]) out.uninformed_units[i] += 1;
        }
    }
    return out;
}

RanefSummary build_ranef_summary(const std::vector<LmmFit>& lmm_fits,
                                 const std::vector<MlpmmFit>& mlpmm_fits,
                                 const LongitudinalDataset& data, const ItemMap& map,
                                 Variant variant) {
    if (variant != Variant::PRC_MLPMM_U && variant != Variant::PRC_MLPMM_UB) {
        throw DomainError("variant must be a latent-process summary");
    }
    const bool keep_b = variant == Variant::PRC_MLPMM_UB;
    std::size_t want_single = 0, want_multi = 0, d = 0;
    for (std::size_t s = 0; s < map.n_processes(); ++s) {
        (map.r(s) == 1 ? want_single : want_multi) += 1;
        d += 2 + (keep_b ? map.r(s) - 1 : 0);
    }
    if (lmm_fits.size() != want_single || mlpmm_fits.size() != want_multi) {
        throw SchemaError("expected " + std::to_string(want_single) + " single-item and " +
                          std::to_string(want_multi) + " multi-item fits, got " +
                          std::to_string(lmm_fits.size()) + " and " +
                          std::to_string(mlpmm_fits.size()));
    }

    RanefSummary out;
    out.variant = variant;
    out.matrix.resize(static_cast<Eigen::Index>(data.n_subjects()), static_cast<Eigen::Index>(d));
    out.uninformed_units.assign(data.n_subjects(), 0);

    Eigen::Index col = 0;
    std::size_t next_single = 0, next_multi = 0;
    for (std::size_t s = 0; s < map.n_processes(); ++s) {
        RanefPrediction pred;
        if (map.r(s) == 1) {
            const LmmFit& fit = lmm_fits[next_single++];
            const std::string& only_item = map.items()[map.items_of(s)[0]];
            if (fit.item != only_item) {
                throw SchemaError("fit for item " + fit.item + " does not cover process " +
                                  map.processes()[s]);
            }
            auto it = std::find(data.items.begin(), data.items.end(), only_item);
            if (it == data.items.end()) {
                throw SchemaError("fitted item " + only_item + " absent from dataset");
            }
            pred = predict_ranef_lmm(fit, data, static_cast<std::size_t>(it - data.items.begin()));
        } else {
            const MlpmmFit& fit = mlpmm_fits[next_multi++];
            std::vector<std::string> expected;
            for (std::size_t q : map.items_of(s)) expected.push_back(map.items()[q]);
            if (fit.items != expected) {
                throw SchemaError("fit does not cover process " + map.processes()[s]);
            }
            pred = predict_ranef_mlpmm(fit, data, map, s);
        }
        out.matrix.col(col) = pred.effects.col(0);
        out.matrix.col(col + 1) = pred.effects.col(1);
        out.columns.push_back("u0_" + map.processes()[s]);
        out.columns.push_back("u1_" + map.processes()[s]);
        col += 2;
        if (keep_b && map.r(s) > 1) {
            for (std::size_t q = 1; q < map.r(s); ++q) {
                out.matrix.col(col) = pred.effects.col(static_cast<Eigen::Index>(2 + q));
                out.columns.push_back("b_" + map.items()[map.items_of(s)[q]]);
                ++col;
            }
        }
        for (std::size_t i = 0; i < data.n_subjects(); ++i) {
            if (!pred.informed[i]) out.uninformed_units[i] += 1;
        }
    }
    return out;
}

} // namespace prc
