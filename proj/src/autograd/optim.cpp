#include "occlume/autograd/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "occlume/autograd/ops.hpp"
#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"

namespace occlume::ag {

void sgd_step(std::span<Tensor> params, SgdState& state) {
  if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& v = state.velocity[i];
    if (v.empty()) v.assign(p.numel(), 0.0);
    if (v.size() != p.numel()) {
      throw ShapeError("sgd_step: velocity " + std::to_string(v.size()) + " vs parameter " +
                       shape_str(p.shape()));
    }
    const bool has = p.has_grad();
    auto data = p.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double g = has ? p.grad()[j] : 0.0;
      v[j] = state.momentum * v[j] + g;
      data[j] -= state.lr * v[j];
    }
  }
}

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs, double eps,
                           std::size_t max_per_input, std::uint64_t subset_seed) {
  auto traced = [&f](std::uint64_t& digest) {
    BranchTrace trace;
    const Tensor y = f();
    digest = trace.digest();
    return y;
  };
  for (auto& x : inputs) x.zero_grad();
  std::uint64_t base = 0, dp = 0, dm = 0;
  traced(base).backward();

  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& x = inputs[t];
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

    std::vector<std::size_t> which(x.numel());
    std::iota(which.begin(), which.end(), 0);
    if (max_per_input > 0 && which.size() > max_per_input) {
      CounterRng rng(subset_seed, "grad_check", t);
      for (std::size_t i = 0; i < max_per_input; ++i) {
        std::swap(which[i], which[i + rng.below(which.size() - i)]);
      }
      which.resize(max_per_input);
      std::sort(which.begin(), which.end());
    }

    auto data = x.data();
    for (std::size_t i : which) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double fp = traced(dp).item();
      data[i] = saved - eps;
      const double fm = traced(dm).item();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.input = t;
        res.index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
      const double fmax = std::max(std::abs(fp), std::abs(fm));
      const double resolution = kGradCheckUlps * (std::nextafter(fmax, INFINITY) - fmax) / (2.0 * eps);
      if (dp != base || dm != base) {
        ++res.tie_crossings;
      } else if (std::abs(a - numeric) <= resolution) {
        ++res.within_resolution;
      } else {
        res.max_rel_error_judged = std::max(res.max_rel_error_judged, err);
      }
    }
  }
  return res;
}

namespace {
constexpr char kMagic[4] = {'M', 'L', 'S', '1'};

template <class T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw ParseError("checkpoint: truncated data");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};
}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out += nt.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : nt.tensor.data()) put<double>(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string(kMagic, 4)) throw ParseError("checkpoint: bad magic");
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = r.get<double>();
    nt.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  const auto bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot write checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace occlume::ag
