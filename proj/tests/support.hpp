#pragma once

// Shared test-only helpers.

#include <functional>
#include <string>

#include "geoprobe/reasoning.hpp"

namespace geoprobe::testing {

/// Actual distances with +-20% multiplicative noise per pair: the
/// middle rung of the actual < noisy < random ordering probes.
class NoisyDistanceProvider final : public DissimilarityProvider {
  public:
    explicit NoisyDistanceProvider(std::uint64_t seed, double fraction = 0.2)
        : seed_(seed), fraction_(fraction) {}

    std::string name() const override { return "actual+noise"; }

    DissimilarityMatrix build(std::span<const City> known, const City& test) const override {
        const ActualDistanceProvider actual;
        const DissimilarityMatrix m = actual.build(known, test);
        Rng rng(mix_seed(seed_, std::hash<std::string>{}(test.qualified_name())));
        DissimilarityMatrix out(m.size());
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = i + 1; j < m.size(); ++j)
                out.set(i, j, m(i, j) * (1.0 + rng.uniform(-fraction_, fraction_)));
        return out;
    }

  private:
    std::uint64_t seed_;
    double fraction_;
};

}  // namespace geoprobe::testing
