#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sekd {

/// Padded batch of token sequences, row-major batch x length.
///
/// loss_mask[b, i] is true when token i of row b is a response token (after
/// SEP, through EOS). The prediction for token i comes from position i - 1.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> token_ids;
  std::vector<std::uint8_t> loss_mask;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> example_index; ///< index into the originating split

  int token(std::size_t b, std::size_t i) const { return token_ids[b * length + i]; }
  bool response(std::size_t b, std::size_t i) const { return loss_mask[b * length + i] != 0; }
};

} // namespace sekd
