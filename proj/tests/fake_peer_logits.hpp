#pragma once

#include <vector>

namespace symode::testing {

// Logits served by the fake peer in "constant" mode; distinct values so that
// beam ranking has no ties.
inline std::vector<double> fake_peer_logits(int vocab_size) {
    std::vector<double> out(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i) out[static_cast<std::size_t>(i)] = -0.25 * ((i * 7) % vocab_size) + 0.001 * i;
    return out;
}

} // namespace symode::testing
