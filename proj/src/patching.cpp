#include "seesaw/patching.hpp"

#include <algorithm>
#include <memory>
#include <string>

namespace seesaw {

void PatchConfig::validate(std::size_t seq_len) const {
    if (stride == 0 || stride > patch_len || patch_len > seq_len || embed_dim == 0)
        throw UsageError("patching: need 1 <= stride <= patch_len <= seq_len and embed_dim > 0 (stride=" +
                         std::to_string(stride) + ", patch_len=" + std::to_string(patch_len) +
                         ", seq_len=" + std::to_string(seq_len) + ", embed_dim=" + std::to_string(embed_dim) + ")");
}

std::size_t patch_count(std::size_t seq_len, std::size_t patch_len, std::size_t stride) {
    if (stride == 0 || patch_len > seq_len)
        throw UsageError("patch_count: need stride >= 1 and patch_len <= seq_len");
    return (seq_len - patch_len) / stride + 2;
}

Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride) {
    if (x.rank() == 0) throw UsageError("patchify: scalar input");
    const std::size_t len = x.dim(-1);
    if (patch_len == 0 || patch_len > len)
        throw UsageError("patchify: patch length " + std::to_string(patch_len) + " exceeds series length " +
                         std::to_string(len));
    if (stride == 0 || stride > patch_len)
        throw UsageError("patchify: stride " + std::to_string(stride) + " must lie in [1, patch length " +
                         std::to_string(patch_len) + "]");
    const std::size_t n = patch_count(len, patch_len, stride);
    const std::size_t rows = x.numel() / len;

    // Source index into the unpadded row for each patch element; padded
    // positions map onto the last value.
    auto src = std::make_shared<std::vector<std::size_t>>(n * patch_len);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < patch_len; ++j) (*src)[i * patch_len + j] = std::min(i * stride + j, len - 1);

    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    out_shape.push_back(n);
    out_shape.push_back(patch_len);
    const auto xv = x.data();
    const std::size_t per_row = n * patch_len;
    std::vector<double> out(rows * per_row);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < per_row; ++k) out[r * per_row + k] = xv[r * len + (*src)[k]];

    return make_result(std::move(out_shape), std::move(out), {x},
                       [x, src, rows, len, per_row](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t k = 0; k < per_row; ++k)
                                   gx[r * len + (*src)[k]] += o.grad[r * per_row + k];
                       },
                       "patchify");
}

PatchTokens embed(const Tensor& patches, const Tensor& w_e, const Tensor& pos) {
    if (patches.rank() < 2 || w_e.rank() != 2 || pos.rank() != 2 || w_e.dim(0) != patches.dim(-1) ||
        pos.dim(0) != patches.dim(-2) || pos.dim(1) != w_e.dim(1))
        throw DimensionError("embed: patches " + shape_str(patches.shape()) + ", weight " + shape_str(w_e.shape()) +
                             " and positions " + shape_str(pos.shape()) + " are inconsistent");
    return {add(matmul(patches, w_e), pos), patches.dim(-2)};
}

}  // namespace seesaw
