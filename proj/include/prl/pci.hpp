#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prl/pomdp.hpp"

namespace prl {

// Tagged control value so reward-valued and composite controls share one support/kernel
// machinery with observation-valued ones. Reals come from finite reward tables, so exact
// comparison is safe.
struct ControlValue {
    enum class Kind : std::uint8_t { Obs, Real, Pair };
    Kind kind = Kind::Obs;
    int i = 0;
    int j = 0;
    double x = 0.0;

    static ControlValue obs(int idx) { return ControlValue{Kind::Obs, idx, 0, 0.0}; }
    static ControlValue real(double v) { return ControlValue{Kind::Real, 0, 0, v}; }
    static ControlValue pair(int a, int b) { return ControlValue{Kind::Pair, a, b, 0.0}; }

    friend bool operator==(const ControlValue& l, const ControlValue& r) {
        return l.kind == r.kind && l.i == r.i && l.j == r.j && l.x == r.x;
    }
    friend bool operator<(const ControlValue& l, const ControlValue& r) {
        if (l.kind != r.kind) return l.kind < r.kind;
        if (l.i != r.i) return l.i < r.i;
        if (l.j != r.j) return l.j < r.j;
        return l.x < r.x;
    }
};

// D_t = (Z_t, W_t, A_t, E_t, R_t)
struct ControlTuple {
    ControlValue z;
    ControlValue w;
    int a = 0;
    int e = 0;
    double r = 0.0;
};

struct PciScheme {
    enum class Kind { PrevObs, KPrevObs, InitialObs, TwoViews, PrevReward };
    Kind kind = Kind::PrevObs;
    int k = 1;                                // KPrevObs lag
    std::vector<std::pair<int, int>> split;   // TwoViews: o -> (o', o'')
    int split_card1 = 0;                      // cardinality of the o' part (W side)
    int split_card2 = 0;                      // cardinality of the o'' part (Z side)
    std::string notes;

    // "prev_obs" | "k_prev_obs:<k>" | "initial_obs" | "prev_reward" | "two_views"
    static PciScheme parse(const std::string& config);
    std::string config_string() const;
};

// embedding geometry of one control coordinate: one-hot blocks or one raw real
struct ControlSpace {
    int card = 0;   // one-hot cardinality; 0 means a single raw real coordinate
    int card2 = 0;  // second one-hot block (TwoViews pairs only)
    int dim() const { return (card == 0 ? 1 : card) + card2; }
};

ControlSpace z_space(const PciScheme& scheme, int t, int n_obs);
ControlSpace w_space(const PciScheme& scheme, int t, int n_obs);

// (Z_t, W_t) for 1 <= t <= H; consumes only observable fields
std::pair<ControlValue, ControlValue> reduce(const ObservableTrajectory& traj, int t,
                                             const PciScheme& scheme);

// E_t = pi_e(O_t, tau_{t-1})
int eval_action(const EvalPolicy& eval, const ObservableTrajectory& traj, int t);

std::vector<ControlTuple> control_tuples(const ObservableTrajectory& traj, const EvalPolicy& eval,
                                         const PciScheme& scheme);

}  // namespace prl
