#pragma once

#include <boost/random/normal_distribution.hpp>

#include <array>
#include <cstdint>

namespace eprlab {

/// Philox4x32-10 block function: 128-bit counter, 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/*
 * Counter-based random stream keyed by (seed, stream_id).
 *
 * Block k of stream (seed, s) is philox4x32({k_lo, k_hi, s_lo, s_hi}, seed).
 * Replicas with distinct stream ids never share a block, and any stream can be
 * replayed bit-for-bit from its key alone, regardless of which thread runs it
 * or in which order. Gaussian variates use the ziggurat transform of
 * boost::random::normal_distribution on top of the 32-bit output.
 */
class NoiseStream {
public:
    using result_type = std::uint32_t;

    NoiseStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }

    result_type operator()() {
        if (pos_ == 4) refill();
        return buffer_[pos_++];
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double normal() { return normal_(*this); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    /// Number of 128-bit blocks consumed so far.
    std::uint64_t counter() const noexcept { return counter_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_;
    std::array<std::uint32_t, 4> buffer_{};
    int pos_ = 4;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace eprlab
