#include "prl/pci.hpp"

#include <algorithm>

namespace prl {

PciScheme PciScheme::parse(const std::string& config) {
    PciScheme s;
    if (config == "prev_obs") {
        s.kind = Kind::PrevObs;
    } else if (config.rfind("k_prev_obs:", 0) == 0) {
        s.kind = Kind::KPrevObs;
        try {
            s.k = std::stoi(config.substr(11));
        } catch (const std::exception&) {
            throw SchemeInapplicable("k_prev_obs: lag is not an integer: " + config);
        }
        if (s.k < 1) throw SchemeInapplicable("k_prev_obs: lag must be >= 1");
    } else if (config == "initial_obs") {
        s.kind = Kind::InitialObs;
    } else if (config == "prev_reward") {
        s.kind = Kind::PrevReward;
    } else if (config == "two_views") {
        s.kind = Kind::TwoViews;  // split map must be attached before use
    } else {
        throw SchemeInapplicable("unknown scheme: " + config);
    }
    return s;
}

std::string PciScheme::config_string() const {
    switch (kind) {
        case Kind::PrevObs: return "prev_obs";
        case Kind::KPrevObs: return "k_prev_obs:" + std::to_string(k);
        case Kind::InitialObs: return "initial_obs";
        case Kind::TwoViews: return "two_views";
        case Kind::PrevReward: return "prev_reward";
    }
    return "";
}

ControlSpace z_space(const PciScheme& scheme, int t, int n_obs) {
    switch (scheme.kind) {
        case PciScheme::Kind::PrevObs:
        case PciScheme::Kind::KPrevObs:
        case PciScheme::Kind::InitialObs:
            return ControlSpace{n_obs, 0};
        case PciScheme::Kind::PrevReward:
            // Z_1 = O_0; later steps carry the raw previous reward
            return t == 1 ? ControlSpace{n_obs, 0} : ControlSpace{0, 0};
        case PciScheme::Kind::TwoViews:
            return ControlSpace{scheme.split_card2, 0};
    }
    return {};
}

ControlSpace w_space(const PciScheme& scheme, int t, int n_obs) {
    (void)t;
    if (scheme.kind == PciScheme::Kind::TwoViews) return ControlSpace{scheme.split_card1, 0};
    return ControlSpace{n_obs, 0};
}

std::pair<ControlValue, ControlValue> reduce(const ObservableTrajectory& traj, int t,
                                             const PciScheme& scheme) {
    const auto& steps = *traj.steps;
    auto obs_at = [&](int u) { return u == 0 ? traj.o0 : steps[u - 1].o; };
    const int w_obs = obs_at(t);
    switch (scheme.kind) {
        case PciScheme::Kind::PrevObs:
            return {ControlValue::obs(obs_at(t - 1)), ControlValue::obs(w_obs)};
        case PciScheme::Kind::KPrevObs:
            return {ControlValue::obs(obs_at(std::max(t - scheme.k, 0))), ControlValue::obs(w_obs)};
        case PciScheme::Kind::InitialObs:
            return {ControlValue::obs(traj.o0), ControlValue::obs(w_obs)};
        case PciScheme::Kind::PrevReward:
            if (t == 1) return {ControlValue::obs(traj.o0), ControlValue::obs(w_obs)};
            return {ControlValue::real(steps[t - 2].r), ControlValue::obs(w_obs)};
        case PciScheme::Kind::TwoViews: {
            if (scheme.split.empty())
                throw SchemeInapplicable("two_views: no observation split map supplied");
            auto [w_part, z_part] = scheme.split[w_obs];
            return {ControlValue::obs(z_part), ControlValue::obs(w_part)};
        }
    }
    throw SchemeInapplicable("unreachable scheme kind");
}

int eval_action(const EvalPolicy& eval, const ObservableTrajectory& traj, int t) {
    const auto& steps = *traj.steps;
    if (eval.kind == EvalPolicy::Kind::CurrentObs) return eval.act_current(steps[t - 1].o);
    std::vector<int> obs_1t(t), acts_prev(t - 1);
    for (int u = 1; u <= t; ++u) obs_1t[u - 1] = steps[u - 1].o;
    for (int u = 1; u < t; ++u) acts_prev[u - 1] = steps[u - 1].a;
    return eval.act_history(obs_1t, acts_prev);
}

std::vector<ControlTuple> control_tuples(const ObservableTrajectory& traj, const EvalPolicy& eval,
                                         const PciScheme& scheme) {
    const auto& steps = *traj.steps;
    const int H = static_cast<int>(steps.size());
    std::vector<ControlTuple> out(H);
    for (int t = 1; t <= H; ++t) {
        auto [z, w] = reduce(traj, t, scheme);
        out[t - 1] = ControlTuple{z, w, steps[t - 1].a, eval_action(eval, traj, t), steps[t - 1].r};
    }
    return out;
}

}  // namespace prl
