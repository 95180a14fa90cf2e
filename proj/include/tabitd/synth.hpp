#pragma once

#include <cstdint>
#include <iosfwd>

namespace tabitd::synth {

/// Seeded generator for a desk-scale benchmark corpus: flow records in the
/// classic 41-column IDS CSV layout (headerless, label last) and behavior
/// records in the UEBA CSV layout (headered). Class mixes default to the
/// public NSL-KDD train-split imbalance, with the rarest class lifted
/// slightly so small subsamples still contain it.
struct SynthConfig {
    std::size_t ids_rows = 25000;
    std::size_t ueba_rows = 3750;
    std::uint64_t seed = 7;
    double normal_fraction = 0.535;
    double dos_fraction = 0.365;
    double probe_fraction = 0.0925;
    double r2l_fraction = 0.006;
    // U2R receives the remainder (~0.0015 with the defaults).
    double malicious_fraction = 0.05; // of the UEBA rows

    void validate() const;
};

void write_ids_csv(std::ostream& os, const SynthConfig& cfg);
void write_ueba_csv(std::ostream& os, const SynthConfig& cfg);

} // namespace tabitd::synth
