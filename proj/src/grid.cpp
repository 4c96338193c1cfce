#include "lsm/grid.hpp"

#include <stdexcept>

#include "lsm/kernels.hpp"

namespace lsm {

namespace {

void axpy(std::vector<double>& dst, const std::vector<double>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Shape field_shape(const std::vector<long>& extents, long channels) {
  Shape s = extents;
  s.push_back(channels);
  return s;
}

void check_rank(const GridField& a, const char* op) {
  if (a.rank() != 1 && a.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": spatial rank must be 1 or 2, got " +
                                std::to_string(a.rank()));
}

}  // namespace

GridField GridField::zeros(std::vector<long> ext, long ch) {
  GridField f;
  f.values = Tensor::zeros(field_shape(ext, ch));
  f.extents = std::move(ext);
  f.channels = ch;
  return f;
}

GridField GridField::wrap(std::vector<long> ext, long ch, Tensor values) {
  if (values.shape != field_shape(ext, ch))
    throw std::invalid_argument("grid field: tensor shape " + shape_str(values.shape) +
                                " does not match extents+channels " +
                                shape_str(field_shape(ext, ch)));
  GridField f;
  f.extents = std::move(ext);
  f.channels = ch;
  f.values = std::move(values);
  return f;
}

long GridField::coord_count() const {
  long n = 1;
  for (long e : extents) n *= e;
  return n;
}

GridField conv(const GridField& a, const Tensor& kernel, long stride, long zero_pad) {
  check_rank(a, "conv");
  if (stride < 1) throw std::invalid_argument("conv: stride must be positive");
  if (zero_pad < 0) throw std::invalid_argument("conv: negative padding");
  const long rank = a.rank();
  if (static_cast<long>(kernel.shape.size()) != rank + 2)
    throw std::invalid_argument("conv: kernel shape " + shape_str(kernel.shape) +
                                " does not match field rank " + std::to_string(rank));
  const long k = kernel.shape[0];
  if (rank == 2 && kernel.shape[1] != k)
    throw std::invalid_argument("conv: only square kernels supported, got " +
                                shape_str(kernel.shape));
  const long ci = kernel.shape[static_cast<size_t>(rank)];
  const long co = kernel.shape[static_cast<size_t>(rank) + 1];
  if (ci != a.channels)
    throw std::invalid_argument("conv: kernel expects " + std::to_string(ci) +
                                " input channels, field has " + std::to_string(a.channels));
  std::vector<long> out_ext(static_cast<size_t>(rank));
  for (long d = 0; d < rank; ++d) {
    const long padded = a.extents[static_cast<size_t>(d)] + 2 * zero_pad;
    if (k > padded)
      throw std::invalid_argument("conv: kernel extent " + std::to_string(k) +
                                  " larger than padded input " + std::to_string(padded));
    out_ext[static_cast<size_t>(d)] = (padded - k) / stride + 1;
  }

  GridField res = GridField::zeros(out_ext, co);
  const auto& in = *a.values.data;
  const auto& ker = *kernel.data;
  auto& out = *res.values.data;
  if (rank == 2) {
    kernels::conv2d(in.data(), a.extents[0], a.extents[1], ci, ker.data(), k, k, co, stride,
                    zero_pad, out.data(), out_ext[0], out_ext[1]);
  } else {
    kernels::conv1d(in.data(), a.extents[0], ci, ker.data(), k, co, stride, zero_pad, out.data(),
                    out_ext[0]);
  }

  Tape* tp = Tape::active();
  if (tp && (tracked(a.values) || tracked(kernel))) {
    const int an = tracked(a.values) ? a.values.node : -1;
    const int kn = tracked(kernel) ? kernel.node : -1;
    auto adata = a.values.data;
    auto kdata = kernel.data;
    const auto in_ext = a.extents;
    res.values.node = tp->record([an, kn, adata, kdata, in_ext, out_ext, rank, k, ci, co, stride,
                                  zero_pad](const std::vector<double>& g, Tape& t) {
      if (an >= 0) {
        std::vector<double> tmp(adata->size(), 0.0);
        if (rank == 2)
          kernels::conv2d_grad_input(g.data(), out_ext[0], out_ext[1], kdata->data(), k, k, ci,
                                     co, stride, zero_pad, tmp.data(), in_ext[0], in_ext[1]);
        else
          kernels::conv1d_grad_input(g.data(), out_ext[0], kdata->data(), k, ci, co, stride,
                                     zero_pad, tmp.data(), in_ext[0]);
        axpy(t.grad_buf(an, static_cast<long>(tmp.size())), tmp);
      }
      if (kn >= 0) {
        std::vector<double> tmp(kdata->size(), 0.0);
        if (rank == 2)
          kernels::conv2d_grad_kernel(g.data(), out_ext[0], out_ext[1], adata->data(), in_ext[0],
                                      in_ext[1], ci, co, k, k, stride, zero_pad, tmp.data());
        else
          kernels::conv1d_grad_kernel(g.data(), out_ext[0], adata->data(), in_ext[0], ci, co, k,
                                      stride, zero_pad, tmp.data());
        axpy(t.grad_buf(kn, static_cast<long>(tmp.size())), tmp);
      }
    });
    res.values.tape_id = tp->id();
  }
  return res;
}

GridField pool_max(const GridField& a, long window) {
  check_rank(a, "pool_max");
  if (window < 1) throw std::invalid_argument("pool_max: window must be positive");
  std::vector<long> out_ext = a.extents;
  for (auto& e : out_ext) {
    if (e % window != 0)
      throw std::invalid_argument("pool_max: extent " + std::to_string(e) +
                                  " not divisible by window " + std::to_string(window));
    e /= window;
  }
  GridField res = GridField::zeros(out_ext, a.channels);
  auto argmax = std::make_shared<std::vector<int64_t>>(res.values.size());
  if (a.rank() == 2) {
    kernels::pool_max2d(a.values.data->data(), a.extents[0], a.extents[1], a.channels, window,
                        res.values.data->data(), argmax->data());
  } else {
    kernels::pool_max1d(a.values.data->data(), a.extents[0], a.channels, window,
                        res.values.data->data(), argmax->data());
  }
  Tape* tp = Tape::active();
  if (tp && tracked(a.values)) {
    const int an = a.values.node;
    const long n_in = a.values.size();
    res.values.node = tp->record([an, n_in, argmax](const std::vector<double>& g, Tape& t) {
      auto& ga = t.grad_buf(an, n_in);
      for (size_t i = 0; i < g.size(); ++i) ga[static_cast<size_t>((*argmax)[i])] += g[i];
    });
    res.values.tape_id = tp->id();
  }
  return res;
}

GridField interpolate_linear(const GridField& a, const std::vector<long>& target_extents) {
  check_rank(a, "interpolate_linear");
  if (target_extents.size() != a.extents.size())
    throw std::invalid_argument("interpolate_linear: target rank mismatch");
  for (long e : target_extents)
    if (e < 1) throw std::invalid_argument("interpolate_linear: target extent must be >= 1");
  GridField res = GridField::zeros(target_extents, a.channels);
  if (a.rank() == 2) {
    kernels::interp_bilinear2d(a.values.data->data(), a.extents[0], a.extents[1], a.channels,
                               res.values.data->data(), target_extents[0], target_extents[1]);
  } else {
    kernels::interp_linear1d(a.values.data->data(), a.extents[0], a.channels,
                             res.values.data->data(), target_extents[0]);
  }
  Tape* tp = Tape::active();
  if (tp && tracked(a.values)) {
    const int an = a.values.node;
    const auto in_ext = a.extents;
    const auto out_ext = target_extents;
    const long c = a.channels;
    const long n_in = a.values.size();
    const long rank = a.rank();
    res.values.node =
        tp->record([an, in_ext, out_ext, c, n_in, rank](const std::vector<double>& g, Tape& t) {
          std::vector<double> tmp(static_cast<size_t>(n_in), 0.0);
          if (rank == 2)
            kernels::interp_bilinear2d_adjoint(g.data(), out_ext[0], out_ext[1], c, tmp.data(),
                                               in_ext[0], in_ext[1]);
          else
            kernels::interp_linear1d_adjoint(g.data(), out_ext[0], c, tmp.data(), in_ext[0]);
          axpy(t.grad_buf(an, n_in), tmp);
        });
    res.values.tape_id = tp->id();
  }
  return res;
}

}  // namespace lsm
