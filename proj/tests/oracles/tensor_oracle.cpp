#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "oracles.hpp"

namespace oracle {

namespace {

Nchw make(int n, int c, int h, int w) {
  Nchw t;
  t.n = n;
  t.c = c;
  t.h = h;
  t.w = w;
  t.v.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
  return t;
}

// NHWC flat order of one tensor, used by the row reshape.
std::vector<double> flat_nhwc(const Nchw& t, int b) {
  std::vector<double> out;
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < t.c; ++c) out.push_back(t.at(b, c, y, x));
  return out;
}

}  // namespace

Nchw from_nhwc(const fdlite::TensorBuf& t) {
  const auto& s = t.shape();
  Nchw o = make(static_cast<int>(s.n), static_cast<int>(s.c), static_cast<int>(s.h), static_cast<int>(s.w));
  for (int b = 0; b < o.n; ++b)
    for (int y = 0; y < o.h; ++y)
      for (int x = 0; x < o.w; ++x)
        for (int c = 0; c < o.c; ++c) o.at(b, c, y, x) = t.at(b, y, x, c);
  return o;
}

fdlite::TensorBuf to_nhwc(const Nchw& t) {
  fdlite::TensorBuf o({t.n, t.h, t.w, t.c});
  for (int b = 0; b < t.n; ++b)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x)
        for (int c = 0; c < t.c; ++c) o.at(b, y, x, c) = static_cast<float>(t.at(b, c, y, x));
  return o;
}

Nchw conv(const Nchw& x, const std::vector<double>& kernel, int out, int kh, int kw,
          const std::vector<double>& bias, int stride, int pad, int groups) {
  const int ho = (x.h + 2 * pad - kh) / stride + 1;
  const int wo = (x.w + 2 * pad - kw) / stride + 1;
  const int cin_g = x.c / groups;
  const int cout_g = out / groups;
  Nchw y = make(x.n, out, ho, wo);
  for (int b = 0; b < x.n; ++b)
    for (int o = 0; o < out; ++o) {
      const int g = o / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (int i = 0; i < cin_g; ++i)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                const double wv = kernel[((static_cast<std::size_t>(o) * kh + ky) * kw + kx) * cin_g + i];
                s += wv * x.at(b, g * cin_g + i, iy, ix);
              }
          y.at(b, o, oy, ox) = s;
        }
    }
  return y;
}

Nchw batch_norm(const Nchw& x, const std::vector<double>& scale, const std::vector<double>& shift,
                const std::vector<double>& mean, const std::vector<double>& var, double eps) {
  Nchw y = x;
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j) {
          const auto k = static_cast<std::size_t>(c);
          y.at(b, c, i, j) = scale[k] * (x.at(b, c, i, j) - mean[k]) / std::sqrt(var[k] + eps) + shift[k];
        }
  return y;
}

Nchw leaky(const Nchw& x, double slope) {
  Nchw y = x;
  for (auto& v : y.v) v = v < 0 ? slope * v : v;
  return y;
}

Nchw max_pool(const Nchw& x, int k, int stride, int pad) {
  const int ho = (x.h + 2 * pad - k) / stride + 1;
  const int wo = (x.w + 2 * pad - k) / stride + 1;
  Nchw y = make(x.n, x.c, ho, wo);
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double m = -std::numeric_limits<double>::infinity();
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy >= 0 && ix >= 0 && iy < x.h && ix < x.w) m = std::max(m, x.at(b, c, iy, ix));
            }
          y.at(b, c, oy, ox) = m;
        }
  return y;
}

std::map<std::string, Nchw> interpret_graph_json(const nlohmann::json& doc,
                                                 const std::map<std::string, std::vector<double>>& weights,
                                                 const Nchw& input) {
  std::map<std::string, Nchw> env;
  env[doc.at("inputs").at(0).at("name").get<std::string>()] = input;
  auto w = [&](const std::string& key) -> const std::vector<double>& {
    auto it = weights.find(key);
    if (it == weights.end()) throw std::runtime_error("oracle: no weight " + key);
    return it->second;
  };
  for (const auto& n : doc.at("nodes")) {
    const auto kind = n.at("kind").get<std::string>();
    const auto ins = n.at("inputs").get<std::vector<std::string>>();
    const auto key = n.at("weight_name").get<std::string>();
    const Nchw& a = env.at(ins.at(0));
    Nchw out;
    if (kind == "Conv") {
      static const std::vector<double> none;
      out = conv(a, w(key + ".weight"), n.at("out_channels").get<int>(), n.at("kernel_h").get<int>(),
                 n.at("kernel_w").get<int>(), n.at("has_bias").get<bool>() ? w(key + ".bias") : none,
                 n.at("stride").get<int>(), n.at("padding").get<int>(), n.at("groups").get<int>());
    } else if (kind == "BatchNorm") {
      out = batch_norm(a, w(key + ".scale"), w(key + ".shift"), w(key + ".mean"), w(key + ".var"),
                       n.at("eps").get<double>());
    } else if (kind == "LeakyReLU") {
      out = leaky(a, n.at("slope").get<double>());
    } else if (kind == "MaxPool") {
      out = max_pool(a, n.at("kernel_h").get<int>(), n.at("stride").get<int>(), n.at("padding").get<int>());
    } else if (kind == "UpsampleNearest2x") {
      // Doubled grid, centre-cropped (or zero-padded) to the reference's size.
      const int th = ins.size() > 1 ? env.at(ins[1]).h : 2 * a.h;
      const int tw = ins.size() > 1 ? env.at(ins[1]).w : 2 * a.w;
      const int oy = (2 * a.h - th) / 2, ox = (2 * a.w - tw) / 2;
      out = make(a.n, a.c, th, tw);
      for (int b = 0; b < a.n; ++b)
        for (int c = 0; c < a.c; ++c)
          for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x) {
              const int sy = y + oy, sx = x + ox;
              if (sy >= 0 && sx >= 0 && sy < 2 * a.h && sx < 2 * a.w) out.at(b, c, y, x) = a.at(b, c, sy / 2, sx / 2);
            }
    } else if (kind == "Add") {
      out = a;
      const Nchw& b = env.at(ins.at(1));
      for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    } else if (kind == "Concat" && n.at("axis") == "channels") {
      int total = 0;
      for (const auto& s : ins) total += env.at(s).c;
      out = make(a.n, total, a.h, a.w);
      int base = 0;
      for (const auto& s : ins) {
        const Nchw& p = env.at(s);
        for (int b = 0; b < p.n; ++b)
          for (int c = 0; c < p.c; ++c)
            for (int y = 0; y < p.h; ++y)
              for (int x = 0; x < p.w; ++x) out.at(b, base + c, y, x) = p.at(b, c, y, x);
        base += p.c;
      }
    } else if (kind == "Concat") {
      int rows = 0;
      for (const auto& s : ins) rows += env.at(s).h;
      out = make(a.n, a.c, rows, 1);
      for (int b = 0; b < a.n; ++b) {
        int r0 = 0;
        for (const auto& s : ins) {
          const Nchw& p = env.at(s);
          for (int r = 0; r < p.h; ++r)
            for (int c = 0; c < p.c; ++c) out.at(b, c, r0 + r, 0) = p.at(b, c, r, 0);
          r0 += p.h;
        }
      }
    } else if (kind == "Reshape") {
      const int rw = n.at("row_width").get<int>();
      const int rows = a.h * a.w * a.c / rw;
      out = make(a.n, rw, rows, 1);
      for (int b = 0; b < a.n; ++b) {
        const auto flat = flat_nhwc(a, b);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < rw; ++c) out.at(b, c, r, 0) = flat[static_cast<std::size_t>(r) * rw + c];
      }
    } else {
      throw std::runtime_error("oracle: unknown kind " + kind);
    }
    env[n.at("name").get<std::string>()] = std::move(out);
  }
  std::map<std::string, Nchw> result;
  for (const auto& o : doc.at("outputs")) {
    result[o.at("label").get<std::string>()] = env.at(o.at("node").get<std::string>());
  }
  return result;
}

}  // namespace oracle
