#ifndef DCI_IO_HPP_
#define DCI_IO_HPP_

#include "dci/core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dci {

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &path, std::size_t line, const std::string &what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// Shortest decimal form that reads back to the same double (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

} // namespace detail

/// CSV with a header row naming the d columns and one sample per row.
struct SampleCsv {
  std::vector<std::string> header;
  SampleSet samples;
};

inline SampleCsv read_samples_csv(std::istream &in, const std::string &path = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  SampleCsv out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty())
      break;
  }
  if (lineno == 0 || detail::trim(line).empty())
    throw ParseError(path, lineno, "missing header row");
  for (auto name : detail::split_commas(line)) {
    auto t = detail::trim(name);
    if (t.empty())
      throw ParseError(path, lineno, "empty column name in header");
    out.header.emplace_back(t);
  }
  const std::size_t d = out.header.size();
  std::vector<double> flat;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    auto fields = detail::split_commas(line);
    if (fields.size() != d)
      throw ParseError(path, lineno,
                       "expected " + std::to_string(d) + " fields, found " + std::to_string(fields.size()));
    for (auto f : fields) {
      auto t = detail::trim(f);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
        throw ParseError(path, lineno, "cannot parse '" + std::string(t) + "' as a finite number");
      flat.push_back(v);
    }
  }
  if (flat.empty())
    throw ParseError(path, lineno, "no sample rows");
  out.samples = SampleSet(d, std::move(flat));
  return out;
}

inline SampleCsv read_samples_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError(path, 0, "cannot open file");
  return read_samples_csv(in, path);
}

/// Default header: prefix1,...,prefixd.
inline std::vector<std::string> numbered_header(const std::string &prefix, std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t k = 0; k < d; ++k)
    h.push_back(prefix + std::to_string(k + 1));
  return h;
}

inline void write_samples_csv(std::ostream &out, const SampleSet &samples,
                              const std::vector<std::string> &header) {
  if (header.size() != samples.dim())
    throw std::invalid_argument("write_samples_csv: header length does not match dimension");
  for (std::size_t k = 0; k < header.size(); ++k)
    out << (k ? "," : "") << header[k];
  out << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t k = 0; k < samples.dim(); ++k)
      out << (k ? "," : "") << format_double(samples(i, k));
    out << '\n';
  }
}

inline void write_samples_csv(const std::string &path, const SampleSet &samples,
                              const std::string &prefix = "x") {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path);
  write_samples_csv(out, samples, numbered_header(prefix, samples.dim()));
}

/// Row-aligned parameter and data files, as produced by an external model run.
struct SamplePairs {
  SampleSet parameters;
  SampleSet data;
};

inline SamplePairs load_pairs(const std::string &param_csv, const std::string &data_csv) {
  auto params = read_samples_csv(param_csv);
  auto data = read_samples_csv(data_csv);
  if (params.samples.size() != data.samples.size())
    throw std::runtime_error("load_pairs: row count mismatch: " + param_csv + " has " +
                             std::to_string(params.samples.size()) + " rows, " + data_csv + " has " +
                             std::to_string(data.samples.size()) + " rows");
  return {std::move(params.samples), std::move(data.samples)};
}

} // namespace dci

#endif // DCI_IO_HPP_
