#ifndef UPL_IO_HPP
#define UPL_IO_HPP

#include <charconv>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "upl/core.hpp"
#include "upl/synthlab.hpp"

namespace upl {

/// Shortest round-trip-safe text for x: 17 significant digits, '.' separator, no locale.
inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  if (ec != std::errc{}) throw Error(ErrorKind::FormatError, "cannot format number");
  return std::string(buf, end);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

}  // namespace detail

/// Writes `# dim=<D>` followed by one comma-separated row per embedding.
inline void write_embeddings(std::ostream& out, const Matrix& m) {
  out << "# dim=" << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << format_double(r[k]);
    out << '\n';
  }
}

inline void write_embeddings(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  write_embeddings(out, m);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

/// Parses the embedding CSV format without normalizing. Blank lines are ignored.
inline Matrix parse_embeddings(std::istream& in, const std::string& name = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      constexpr std::string_view tag = "# dim=";
      if (text.substr(0, tag.size()) != tag)
        throw Error(ErrorKind::FormatError,
                    detail::where(name, lineno) + "expected header '# dim=<D>'");
      const std::string_view num = text.substr(tag.size());
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), dim);
      if (ec != std::errc{} || p != num.data() + num.size() || dim < 1)
        throw Error(ErrorKind::FormatError, detail::where(name, lineno) + "bad dimension");
      have_header = true;
      continue;
    }
    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = text.find(',', start);
      const std::string_view field = detail::trim(
          text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                             : comma - start));
      double x = 0.0;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
      if (field.empty() || ec != std::errc{} || p != field.data() + field.size())
        throw Error(ErrorKind::FormatError, detail::where(name, lineno) + "field " +
                                                std::to_string(fields + 1) + " is not a number");
      values.push_back(x);
      ++fields;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields != dim)
      throw Error(ErrorKind::DimMismatch, detail::where(name, lineno) + "expected " +
                                              std::to_string(dim) + " values, got " +
                                              std::to_string(fields));
    ++rows;
  }
  if (!have_header) throw Error(ErrorKind::FormatError, name + ": missing '# dim=<D>' header");
  Matrix m(rows, dim);
  std::copy(values.begin(), values.end(), m.flat().begin());
  return m;
}

inline Matrix read_embedding_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_embeddings(in, path);
}

/// Loads a visual and a text file, pairs rows by index and normalizes them.
inline std::pair<EmbeddingBatch, EmbeddingBatch> load_embeddings(const std::string& path_v,
                                                                 const std::string& path_t) {
  Matrix v = read_embedding_file(path_v);
  Matrix t = read_embedding_file(path_t);
  if (v.cols() != t.cols())
    throw Error(ErrorKind::DimMismatch, path_v + " has dim " + std::to_string(v.cols()) + ", " +
                                            path_t + " has dim " + std::to_string(t.cols()));
  if (v.rows() != t.rows())
    throw Error(ErrorKind::CountMismatch, path_v + " has " + std::to_string(v.rows()) +
                                              " rows, " + path_t + " has " +
                                              std::to_string(t.rows()) + " rows");
  return {normalize_rows(v), normalize_rows(t)};
}

inline constexpr std::string_view kCurvesHeader =
    "epoch,loss,r1_i2t,r5_i2t,r10_i2t,r1_t2i,r5_t2i,r10_t2i,rsum,mean_pos_sim,mean_hardneg_sim,gap";

inline void write_snapshot_row(std::ostream& out, const Snapshot& s) {
  out << s.epoch << ',' << format_double(s.loss);
  for (double r : s.metrics.i2t) out << ',' << format_double(r);
  for (double r : s.metrics.t2i) out << ',' << format_double(r);
  out << ',' << format_double(s.metrics.rsum) << ',' << format_double(s.gap.mean_positive) << ','
      << format_double(s.gap.mean_hardest_negative) << ',' << format_double(s.gap.gap) << '\n';
}

inline void write_curves(std::ostream& out, const ExperimentRecord& rec) {
  out << kCurvesHeader << '\n';
  for (const Snapshot& s : rec) write_snapshot_row(out, s);
}

inline std::string curves_csv(const ExperimentRecord& rec) {
  std::ostringstream out;
  write_curves(out, rec);
  return out.str();
}

}  // namespace upl

#endif  // UPL_IO_HPP
