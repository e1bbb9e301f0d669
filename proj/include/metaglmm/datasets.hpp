#ifndef METAGLMM_DATASETS_HPP
#define METAGLMM_DATASETS_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaglmm/data.hpp"
#include "metaglmm/variances.hpp"

namespace metaglmm {

// ICU length-of-stay meta-analysis (five randomized trials, surgical vs
// conservative management), bundled for the reanalysis command and tests.
struct TwoArmGammaRow {
    const char* study;
    double n1, mean1, sd1; // treatment arm
    double n0, mean0, sd0; // control arm
};

inline const std::vector<TwoArmGammaRow>& long2020_rows() {
    static const std::vector<TwoArmGammaRow> rows = {
        {"Study 1", 20, 9.6, 0.7, 20, 14.6, 2.2},
        {"Study 2", 25, 9.9, 8.3, 25, 10.9, 11.6},
        {"Study 3", 23, 13.8, 4.2, 23, 23.3, 18.7},
        {"Study 4", 18, 16.5, 7.4, 19, 26.8, 13.2},
        {"Study 5", 75, 8.2, 4.3, 89, 14.6, 3.2},
    };
    return rows;
}

// Per-arm gamma dataset with x = (1, treatment); control arm first within
// each study, each arm carrying its own random effect.
inline Dataset long2020_dataset() {
    Dataset ds;
    ds.family = FamilySpec::gamma();
    ds.p = 2;
    for (const TwoArmGammaRow& r : long2020_rows()) {
        StudyRecord c;
        c.study_id = r.study;
        c.record_id = std::string(r.study) + "/0";
        c.x = {1.0, 0.0};
        c.n = r.n0;
        c.ybar = r.mean0;
        c.s2 = r.sd0 * r.sd0;
        ds.records.push_back(plugin_dispersion(std::move(c), ds.family));

        StudyRecord t;
        t.study_id = r.study;
        t.record_id = std::string(r.study) + "/1";
        t.x = {1.0, 1.0};
        t.n = r.n1;
        t.ybar = r.mean1;
        t.s2 = r.sd1 * r.sd1;
        ds.records.push_back(plugin_dispersion(std::move(t), ds.family));
    }
    ds.validate();
    return ds;
}

// Per-study log mean-ratio contrasts for the normal-normal comparators.
inline NNInput long2020_nn_input() {
    return nn_contrast_input(long2020_dataset());
}

inline Dataset bundled_dataset(const std::string& id) {
    if (id == "long2020") return long2020_dataset();
    throw std::invalid_argument("unknown bundled dataset '" + id + "'; available: long2020");
}

} // namespace metaglmm

#endif
