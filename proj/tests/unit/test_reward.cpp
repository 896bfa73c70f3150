#include <doctest.h>

#include <cmath>
#include <random>

#include "cores/reward.hpp"

using namespace cores;

TEST_CASE("sparsity reward anchor and limits") {
    CHECK(sparsity_reward(0.5, 0.5) == doctest::Approx(0.95));
    CHECK(sparsity_reward(1.0, 0.5) == doctest::Approx(0.0));
    // d_tilde = ln 0.05 / ln 0.2
    CHECK(sparsity_reward(0.04, 0.2) ==
          doctest::Approx(1.0 - std::pow(0.04, std::log(0.05) / std::log(0.2))));
    CHECK(sparsity_reward(0.04, 0.2) == doctest::Approx(0.9975).epsilon(1e-3));
    CHECK_THROWS_AS(sparsity_reward(0.0, 0.5), DomainError);
}

TEST_CASE("sparsity reward is strictly decreasing in the ratio") {
    // rho^d_tilde underflows past double epsilon for tiny rho with large
    // d_tilde, where 1 - rho^d_tilde rounds to exactly 1; strictness is
    // asserted wherever the value is representable below 1.
    for (int di = 0; di < 10; ++di) {
        const double d = 0.05 + 0.09 * di;
        double prev = 2.0;
        for (int ri = 1; ri <= 50; ++ri) {
            const double rho = double(ri) / 50.0;
            const double r = sparsity_reward(rho, d);
            CHECK(r <= prev);
            if (prev < 1.0) CHECK(r < prev);
            CHECK(r >= 0.0);
            CHECK(r <= 1.0);
            if (rho > 0.3) CHECK(r < 1.0);
            prev = r;
        }
    }
}

TEST_CASE("performance reward reads the true-class probability") {
    std::vector<double> probs{0.7, 0.2, 0.1};
    CHECK(performance_reward(probs, 0) == doctest::Approx(0.7));
    std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
    CHECK(performance_reward(uniform, 2) == doctest::Approx(0.25));
    std::vector<double> onehot{0.0, 1.0};
    CHECK(performance_reward(onehot, 1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(performance_reward(probs, 5), IndexError);
}

namespace {

PredictionSet make_set(std::initializer_list<std::size_t> classes) {
    PredictionSet s;
    for (auto c : classes) s.classes.insert(c);
    return s;
}

}  // namespace

TEST_CASE("three-case reward combination") {
    RewardConfig cfg;
    cfg.lambda = 0.2;
    cfg.desired_ratio = 0.5;
    cfg.env_penalty = 1.5;
    cfg.alpha_conf = 0.1;

    // certain: lambda*R_p + (1-lambda)*R_s with R_p=0.8, R_s=0.5
    // rho chosen so that sparsity_reward(rho, 0.5) = 0.5
    const double d_tilde = std::log(0.05) / std::log(0.5);
    const double rho_half = std::pow(0.5, 1.0 / d_tilde);
    std::vector<double> probs{0.8, 0.15, 0.05};
    RewardBreakdown certain = compute_reward(probs, 0, rho_half, make_set({0}), cfg, true);
    CHECK(certain.reward_case == RewardCase::kCertain);
    CHECK(certain.total == doctest::Approx(0.2 * 0.8 + 0.8 * 0.5));

    std::vector<double> probs_mid{0.6, 0.3, 0.1};
    RewardBreakdown uncertain = compute_reward(probs_mid, 0, 0.5, make_set({0, 1}), cfg, true);
    CHECK(uncertain.reward_case == RewardCase::kUncertain);
    CHECK(uncertain.total == doctest::Approx(0.3));

    RewardBreakdown miss = compute_reward(probs_mid, 2, rho_half, make_set({0}), cfg, true);
    // sparsity reward at rho_half is 0.5, so the miss total is -0.5; a rho
    // with R_s = 0.9 pins the -0.9 case.
    CHECK(miss.reward_case == RewardCase::kMiss);
    CHECK(miss.total == doctest::Approx(-0.5));
    const double rho_09 = std::pow(0.1, 1.0 / d_tilde);
    CHECK(compute_reward(probs_mid, 2, rho_09, make_set({0}), cfg, true).total ==
          doctest::Approx(-0.9));

    RewardConfig lam1 = cfg;
    lam1.lambda = 1.0;
    CHECK(compute_reward(probs, 0, 0.77, make_set({0}), lam1, true).total ==
          doctest::Approx(0.8));

    RewardBreakdown invalid = compute_reward(probs, 0, 0.5, make_set({0}), cfg, false);
    CHECK(invalid.reward_case == RewardCase::kInvalid);
    CHECK(invalid.total == doctest::Approx(-1.5));
}

TEST_CASE("case ranges hold on random inputs") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        RewardConfig cfg;
        cfg.lambda = unit(rng);
        cfg.desired_ratio = 0.05 + 0.9 * unit(rng);
        cfg.env_penalty = unit(rng);
        const std::size_t k = 2 + trial % 4;
        std::vector<double> probs(k);
        double sum = 0.0;
        for (double& p : probs) {
            p = 0.01 + unit(rng);
            sum += p;
        }
        for (double& p : probs) p /= sum;
        const std::size_t label = trial % k;
        const double ratio = 0.01 + 0.99 * unit(rng);
        PredictionSet pset;
        for (std::size_t c = 0; c < k; ++c) {
            if (unit(rng) < 0.5) pset.classes.insert(c);
        }
        const RewardBreakdown rb = compute_reward(probs, label, ratio, pset, cfg, true);
        switch (rb.reward_case) {
            case RewardCase::kCertain:
                CHECK(rb.total >= 0.0);
                CHECK(rb.total <= 1.0);
                break;
            case RewardCase::kUncertain:
                CHECK(rb.total > 0.0);
                CHECK(rb.total <= 0.5);
                break;
            case RewardCase::kMiss:
                CHECK(rb.total >= -1.0);
                CHECK(rb.total <= 0.0);
                break;
            case RewardCase::kInvalid:
                FAIL("valid input classified as invalid");
        }
    }
}

TEST_CASE("miss reward is zero exactly at the full graph") {
    RewardConfig cfg;
    cfg.desired_ratio = 0.3;
    std::vector<double> probs{0.9, 0.1};
    const RewardBreakdown full = compute_reward(probs, 1, 1.0, make_set({0}), cfg, true);
    CHECK(full.reward_case == RewardCase::kMiss);
    CHECK(full.total == 0.0);
    const RewardBreakdown partial = compute_reward(probs, 1, 0.999, make_set({0}), cfg, true);
    CHECK(partial.total < 0.0);
}
