#pragma once

#include <array>
#include <cstdint>

namespace fastslow {

/// Philox4x32-10 block function (Salmon et al. 2011).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based stream: key = root seed, counter = (draw index, stream id).
/// Distinct stream ids never share a counter value, so streams are independent
/// without any state shared between them.
class Stream {
  public:
    Stream(std::uint64_t root_seed, std::uint64_t stream_id);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }
    /// Standard normal by the Box-Muller transform; one cached spare per pair.
    double normal();

    std::uint64_t draws() const { return block_; }

  private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fastslow
