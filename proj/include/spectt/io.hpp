#pragma once

// Matrix and parameter files: a text header, then raw little-endian f64.
//
//   STTPMAT v1 rows=<R> cols=<C> dtype=f64 order=row-major\n<8·R·C bytes>
//
// Parameter files carry a key=value manifest ended by a blank line, then
// the payload blocks it declares, in order.

#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/fit.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"
#include "spectt/sttp.hpp"
#include "spectt/svdp.hpp"

namespace spectt {

namespace detail {

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

inline double get_f64(std::string_view bytes, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("bad " + std::string(what) + " value '" + std::string(s) + "'");
  return v;
}

inline std::size_t parse_count(std::string_view s, std::string_view what, bool positive) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || (positive && v == 0))
    throw FormatError("bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_all(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MatrixFile

inline std::string encode_matrix(const Matrix& m) {
  std::string out = "STTPMAT v1 rows=" + std::to_string(m.rows()) +
                    " cols=" + std::to_string(m.cols()) + " dtype=f64 order=row-major\n";
  out.reserve(out.size() + 8 * m.values().size());
  for (double v : m.values()) detail::put_f64(out, v);
  return out;
}

inline Matrix decode_matrix(std::string_view bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw FormatError("matrix file: missing header line");
  const auto tok = detail::split(bytes.substr(0, nl), ' ');
  if (tok.size() != 6 || tok[0] != "STTPMAT" || tok[1] != "v1" || !tok[2].starts_with("rows=") ||
      !tok[3].starts_with("cols=") || tok[4] != "dtype=f64" || tok[5] != "order=row-major")
    throw FormatError("matrix file: malformed header '" + std::string(bytes.substr(0, nl)) + "'");
  const std::size_t rows = detail::parse_count(tok[2].substr(5), "row count", true);
  const std::size_t cols = detail::parse_count(tok[3].substr(5), "column count", true);
  const std::size_t payload = bytes.size() - nl - 1;
  if (payload != 8 * rows * cols)
    throw FormatError("matrix file: payload has " + std::to_string(payload) + " bytes, expected " +
                      std::to_string(8 * rows * cols));
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < rows * cols; ++k) m.values()[k] = detail::get_f64(bytes, nl + 1 + 8 * k);
  return m;
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  detail::write_all(path, encode_matrix(m));
}

inline Matrix read_matrix(const std::string& path) { return decode_matrix(detail::read_all(path)); }

// ---------------------------------------------------------------------------
// ParamsFile

namespace detail {

inline std::string join_counts(std::span<const std::size_t> v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + std::to_string(v[k]);
  return s;
}

inline std::string join_signs(std::span<const double> v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + std::string(v[k] < 0 ? "-1" : "1");
  return s;
}

struct Block {
  std::string name;
  std::span<const double> data;
  const char* variant = nullptr;
};

inline std::string emit(const std::vector<std::pair<std::string, std::string>>& head,
                        const std::vector<Block>& blocks) {
  std::string out = "STTPPARAMS v1\n";
  for (const auto& [k, v] : head) out += k + "=" + v + "\n";
  for (const auto& b : blocks) {
    out += "block=" + b.name + " " + std::to_string(b.data.size());
    if (b.variant) out += std::string(" ") + b.variant;
    out += "\n";
  }
  out += "\n";
  for (const auto& b : blocks)
    for (double v : b.data) put_f64(out, v);
  return out;
}

inline SpectrumMode parse_mode(std::string_view s) {
  if (s == "identity") return SpectrumMode::Identity;
  if (s == "learned") return SpectrumMode::Learned;
  if (s == "regularized") return SpectrumMode::LearnedRegularized;
  throw FormatError("params file: unknown spectrum '" + std::string(s) + "'");
}

inline LayoutVariant parse_variant(std::string_view s) {
  if (s == "full") return LayoutVariant::Full;
  if (s == "reduced") return LayoutVariant::Reduced;
  throw FormatError("params file: unknown layout variant '" + std::string(s) + "'");
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> fields;
  struct Decl {
    std::string name;
    std::size_t count = 0;
    std::string variant;
  };
  std::vector<Decl> blocks;
  std::string_view payload;

  const std::string& get(std::string_view key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return v;
    throw FormatError("params file: missing field '" + std::string(key) + "'");
  }
};

inline Manifest parse_manifest(std::string_view bytes) {
  const std::size_t end = bytes.find("\n\n");
  if (end == std::string_view::npos) throw FormatError("params file: manifest is not terminated");
  const auto lines = split(bytes.substr(0, end), '\n');
  if (lines.empty() || lines[0] != "STTPPARAMS v1")
    throw FormatError("params file: missing 'STTPPARAMS v1' header");
  Manifest m;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t eq = lines[i].find('=');
    if (eq == std::string_view::npos)
      throw FormatError("params file: malformed line '" + std::string(lines[i]) + "'");
    const std::string_view key = lines[i].substr(0, eq), val = lines[i].substr(eq + 1);
    if (key == "block") {
      const auto parts = split(val, ' ');
      if (parts.size() < 2 || parts.size() > 3)
        throw FormatError("params file: malformed block '" + std::string(val) + "'");
      m.blocks.push_back({std::string(parts[0]), parse_count(parts[1], "block count", false),
                          parts.size() == 3 ? std::string(parts[2]) : std::string()});
    } else {
      m.fields.emplace_back(std::string(key), std::string(val));
    }
  }
  m.payload = bytes.substr(end + 2);
  std::size_t total = 0;
  for (const auto& b : m.blocks) total += b.count;
  if (m.payload.size() != 8 * total)
    throw FormatError("params file: payload has " + std::to_string(m.payload.size()) +
                      " bytes, manifest declares " + std::to_string(8 * total));
  return m;
}

inline std::vector<double> parse_signs(const std::string& s, std::size_t r) {
  std::vector<double> out;
  for (auto t : split(s, ' ')) {
    if (t == "1") out.push_back(1.0);
    else if (t == "-1") out.push_back(-1.0);
    else throw FormatError("params file: bad sign '" + std::string(t) + "'");
  }
  if (out.size() != r) throw FormatError("params file: expected " + std::to_string(r) + " signs");
  return out;
}

inline Dims parse_dims(const std::string& s) {
  Dims out;
  for (auto t : split(s, ' ')) out.push_back(parse_count(t, "dimension", true));
  return out;
}

/// Reads declared blocks in order into their targets.
class PayloadReader {
 public:
  explicit PayloadReader(const Manifest& m) : m_(m) {}

  void expect(const std::string& name, std::span<double> into, const std::string& variant = {}) {
    if (next_ >= m_.blocks.size())
      throw FormatError("params file: missing block '" + name + "'");
    const auto& b = m_.blocks[next_++];
    if (b.name != name)
      throw FormatError("params file: expected block '" + name + "', found '" + b.name + "'");
    if (b.count != into.size())
      throw FormatError("params file: block '" + name + "' declares " + std::to_string(b.count) +
                        " values, the layout has " + std::to_string(into.size()));
    if (b.variant != variant)
      throw FormatError("params file: block '" + name + "' has layout '" + b.variant +
                        "', expected '" + variant + "'");
    for (std::size_t i = 0; i < into.size(); ++i) into[i] = get_f64(m_.payload, 8 * (pos_ + i));
    pos_ += into.size();
  }

  void finish() const {
    if (next_ != m_.blocks.size()) throw FormatError("params file: unexpected extra blocks");
  }

 private:
  const Manifest& m_;
  std::size_t next_ = 0, pos_ = 0;
};

}  // namespace detail

inline std::string encode_params(const SvdpParams& p) {
  validate(p, false);
  std::vector<std::pair<std::string, std::string>> head = {
      {"scheme", "svdp"},
      {"d_out", std::to_string(p.d_out)},
      {"d_in", std::to_string(p.d_in)},
      {"r", std::to_string(p.rank)},
      {"spectrum", to_string(p.spectrum.mode)},
      {"lambda", detail::format_double(p.spectrum.lambda)},
      {"signs", detail::join_signs(p.spectrum.signs)},
  };
  std::vector<detail::Block> blocks = {{"u", p.u.params(), to_string(p.u.variant())},
                                       {"v", p.v.params(), to_string(p.v.variant())}};
  if (p.spectrum.learned()) blocks.push_back({"s", p.spectrum.s, nullptr});
  return detail::emit(head, blocks);
}

inline std::string encode_params(const SttpParams& p) {
  validate(p);
  std::vector<std::pair<std::string, std::string>> head = {
      {"scheme", "sttp"},
      {"d_out", std::to_string(p.shape.d_out())},
      {"d_in", std::to_string(p.shape.d_in())},
      {"r", std::to_string(p.shape.r)},
      {"spectrum", to_string(p.spectrum.mode)},
      {"lambda", detail::format_double(p.spectrum.lambda)},
      {"factors_out", detail::join_counts(p.shape.out_fac.factors)},
      {"factors_in", detail::join_counts(p.shape.in_fac.factors)},
      {"ranks", detail::join_counts(p.shape.schedule.ranks)},
      {"signs", detail::join_signs(p.spectrum.signs)},
  };
  std::vector<detail::Block> blocks;
  for (std::size_t k = 0; k < p.cores.size(); ++k)
    blocks.push_back({"core" + std::to_string(k + 1), p.cores[k].params(),
                      to_string(p.cores[k].variant())});
  if (p.spectrum.learned()) blocks.push_back({"s", p.spectrum.s, nullptr});
  return detail::emit(head, blocks);
}

inline std::string encode_params(const AnyParams& p) {
  return std::visit([](const auto& q) { return encode_params(q); }, p);
}

inline AnyParams decode_params(std::string_view bytes) {
  const detail::Manifest m = detail::parse_manifest(bytes);
  const std::string& scheme = m.get("scheme");
  const std::size_t d_out = detail::parse_count(m.get("d_out"), "d_out", true);
  const std::size_t d_in = detail::parse_count(m.get("d_in"), "d_in", true);
  const std::size_t r = detail::parse_count(m.get("r"), "r", true);
  const SpectrumMode mode = detail::parse_mode(m.get("spectrum"));
  const double lambda = detail::parse_double(m.get("lambda"), "lambda");
  if (r > rank_cap(d_out, d_in)) throw FormatError("params file: rank exceeds min(d_out, d_in)");
  SpectrumParams sp = mode == SpectrumMode::Identity ? SpectrumParams::identity(r)
                                                     : SpectrumParams::learned_ones(r, mode, lambda);
  sp.lambda = lambda;
  sp.signs = detail::parse_signs(m.get("signs"), r);
  detail::PayloadReader reader(m);

  if (scheme == "svdp") {
    auto variant_of = [&](std::size_t idx) {
      if (idx >= m.blocks.size()) throw FormatError("params file: missing block");
      return detail::parse_variant(m.blocks[idx].variant);
    };
    SvdpParams p{d_out, d_in, r, HouseholderLayout(d_out, r, variant_of(0)),
                 HouseholderLayout(d_in, r, variant_of(1)), std::move(sp)};
    reader.expect("u", p.u.params(), to_string(p.u.variant()));
    reader.expect("v", p.v.params(), to_string(p.v.variant()));
    if (p.spectrum.learned()) reader.expect("s", p.spectrum.s);
    reader.finish();
    return p;
  }
  if (scheme == "sttp") {
    SttpParams p;
    try {
      p = make_sttp(d_out, d_in, r, mode, InitScheme::identity(), 0, lambda);
    } catch (const DomainError& e) {
      throw FormatError(std::string("params file: ") + e.what());
    }
    if (detail::parse_dims(m.get("factors_out")) != p.shape.out_fac.factors ||
        detail::parse_dims(m.get("factors_in")) != p.shape.in_fac.factors ||
        detail::parse_dims(m.get("ranks")) != p.shape.schedule.ranks)
      throw FormatError("params file: factorization or rank schedule disagrees with dims");
    p.spectrum = std::move(sp);
    for (std::size_t k = 0; k < p.cores.size(); ++k)
      reader.expect("core" + std::to_string(k + 1), p.cores[k].params(),
                    to_string(p.cores[k].variant()));
    if (p.spectrum.learned()) reader.expect("s", p.spectrum.s);
    reader.finish();
    return p;
  }
  throw FormatError("params file: unknown scheme '" + scheme + "'");
}

inline void write_params(const std::string& path, const AnyParams& p) {
  detail::write_all(path, encode_params(p));
}

inline AnyParams read_params(const std::string& path) {
  return decode_params(detail::read_all(path));
}

}  // namespace spectt
