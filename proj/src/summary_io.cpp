#include "rfuse/summary_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rfuse {
namespace {

using json = nlohmann::json;

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }
std::string at_record(std::size_t rec) { return "record " + std::to_string(rec) + ": "; }

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) fail(ErrorCode::ParseError, at_line(lineno) + "stray quote");
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted && c != ' ') fail(ErrorCode::ParseError, at_line(lineno) + "text after closing quote");
      cur += c;
    }
  }
  if (quoted) fail(ErrorCode::ParseError, at_line(lineno) + "unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  if (s.empty()) fail(ErrorCode::ParseError, where + "empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    fail(ErrorCode::ParseError, where + "not a finite number: '" + s + "'");
  }
  return v;
}

std::int64_t parse_count(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || v < 1) {
    fail(ErrorCode::ParseError, where + "n must be a positive integer, got '" + s + "'");
  }
  return v;
}

Matrix checked_cov(std::span<const double> tril, std::size_t d, const std::string& where) {
  if (tril.size() != d * (d + 1) / 2) {
    fail(ErrorCode::DimensionMismatch, where + "covariance triangle needs " +
                                           std::to_string(d * (d + 1) / 2) + " entries, got " +
                                           std::to_string(tril.size()));
  }
  Matrix cov = tril_to_cov(tril, d);
  if (!is_spd(cov)) fail(ErrorCode::NonSpdCovariance, where + "covariance is not positive definite");
  return cov;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos && trim(s) == s) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<SourceSummary> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split_csv_line(line, lineno);
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::ParseError, "empty summary file");
  for (auto& h : header) h = trim(h);
  if (header.size() < 3 || header[0] != "source_id" || header[1] != "n") {
    fail(ErrorCode::ParseError, at_line(lineno) + "header must start with source_id,n,theta_1");
  }
  std::size_t d = 0;
  while (2 + d < header.size() && header[2 + d] == "theta_" + std::to_string(d + 1)) ++d;
  if (d == 0) fail(ErrorCode::ParseError, at_line(lineno) + "no theta_1 column");
  const std::size_t n_cov = header.size() - 2 - d;
  if (n_cov != 0) {
    if (n_cov != d * (d + 1) / 2) {
      fail(ErrorCode::DimensionMismatch, at_line(lineno) + "expected " +
                                             std::to_string(d * (d + 1) / 2) +
                                             " covariance columns for d=" + std::to_string(d));
    }
    std::size_t c = 2 + d;
    for (std::size_t i = 1; i <= d; ++i)
      for (std::size_t j = 1; j <= i; ++j, ++c) {
        const std::string want = "cov_" + std::to_string(i) + std::to_string(j);
        if (header[c] != want) {
          fail(ErrorCode::ParseError, at_line(lineno) + "expected column '" + want + "', got '" + header[c] + "'");
        }
      }
  }

  std::vector<SourceSummary> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line, lineno);
    const std::string where = at_line(lineno);
    if (fields.size() != header.size()) {
      fail(ErrorCode::DimensionMismatch, where + "expected " + std::to_string(header.size()) +
                                             " fields, got " + std::to_string(fields.size()));
    }
    SourceSummary s;
    s.id = trim(fields[0]);
    if (s.id.empty()) fail(ErrorCode::ParseError, where + "empty source_id");
    s.n = parse_count(fields[1], where);
    s.theta.resize(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) s.theta[static_cast<Eigen::Index>(j)] = parse_double(fields[2 + j], where);
    if (n_cov > 0) {
      std::size_t empty = 0;
      for (std::size_t c = 2 + d; c < fields.size(); ++c) empty += trim(fields[c]).empty() ? 1 : 0;
      if (empty != n_cov) {
        if (empty != 0) fail(ErrorCode::ParseError, where + "covariance fields partially empty");
        std::vector<double> tril;
        for (std::size_t c = 2 + d; c < fields.size(); ++c) tril.push_back(parse_double(fields[c], where));
        s.cov = checked_cov(tril, d, where);
      }
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) fail(ErrorCode::ParseError, "summary file has no records");
  return out;
}

std::vector<SourceSummary> parse_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::ParseError, "top-level JSON value must be an array");
  if (doc.empty()) fail(ErrorCode::ParseError, "summary file has no records");

  std::vector<SourceSummary> out;
  std::size_t d = 0;
  for (std::size_t r = 0; r < doc.size(); ++r) {
    const auto& rec = doc[r];
    const std::string where = at_record(r + 1);
    if (!rec.is_object()) fail(ErrorCode::ParseError, where + "not an object");
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      const std::string& key = it.key();
      if (key != "id" && key != "n" && key != "theta" && key != "cov_tril") {
        fail(ErrorCode::ParseError, where + "unknown key '" + key + "'");
      }
    }
    SourceSummary s;
    if (!rec.contains("id") || !rec["id"].is_string() || rec["id"].get<std::string>().empty()) {
      fail(ErrorCode::ParseError, where + "'id' must be a nonempty string");
    }
    s.id = rec["id"].get<std::string>();
    if (!rec.contains("n") || !rec["n"].is_number_integer() || rec["n"].get<std::int64_t>() < 1) {
      fail(ErrorCode::ParseError, where + "'n' must be a positive integer");
    }
    s.n = rec["n"].get<std::int64_t>();
    if (!rec.contains("theta") || !rec["theta"].is_array() || rec["theta"].empty()) {
      fail(ErrorCode::ParseError, where + "'theta' must be a nonempty array");
    }
    const auto& th = rec["theta"];
    if (r == 0) d = th.size();
    if (th.size() != d) {
      fail(ErrorCode::DimensionMismatch, where + "theta has " + std::to_string(th.size()) +
                                             " entries, expected " + std::to_string(d));
    }
    s.theta.resize(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      if (!th[j].is_number()) fail(ErrorCode::ParseError, where + "theta entries must be numbers");
      s.theta[static_cast<Eigen::Index>(j)] = th[j].get<double>();
    }
    if (rec.contains("cov_tril") && !rec["cov_tril"].is_null()) {
      const auto& ct = rec["cov_tril"];
      if (!ct.is_array()) fail(ErrorCode::ParseError, where + "'cov_tril' must be an array");
      std::vector<double> tril;
      for (const auto& v : ct) {
        if (!v.is_number()) fail(ErrorCode::ParseError, where + "cov_tril entries must be numbers");
        tril.push_back(v.get<double>());
      }
      s.cov = checked_cov(tril, d, where);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SummaryFormat format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "json") return SummaryFormat::Json;
  }
  return SummaryFormat::Csv;
}

SummaryFormat parse_format_name(const std::string& name) {
  if (name == "csv") return SummaryFormat::Csv;
  if (name == "json") return SummaryFormat::Json;
  fail(ErrorCode::ParseError, "unknown format '" + name + "'");
}

std::vector<double> cov_to_tril(const Matrix& cov) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(cov(i, j));
  return out;
}

Matrix tril_to_cov(std::span<const double> tril, std::size_t d) {
  if (tril.size() != d * (d + 1) / 2) fail(ErrorCode::DimensionMismatch, "covariance triangle has the wrong length");
  Matrix cov(d, d);
  std::size_t c = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j, ++c) {
      cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tril[c];
      cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = tril[c];
    }
  return cov;
}

std::vector<SourceSummary> parse_summaries(const std::string& text, SummaryFormat format) {
  return format == SummaryFormat::Json ? parse_json(text) : parse_csv(text);
}

FusionProblem parse_summary_file(const std::string& path, SummaryFormat format,
                                 WeightingScheme weighting) {
  return FusionProblem(parse_summaries(read_file(path), format), std::move(weighting));
}

FusionProblem parse_summary_file(const std::string& path, WeightingScheme weighting) {
  return parse_summary_file(path, format_from_path(path), std::move(weighting));
}

std::string write_summaries(std::span<const SourceSummary> sources, SummaryFormat format) {
  if (sources.empty()) fail(ErrorCode::InvalidProblem, "nothing to write");
  const auto d = static_cast<std::size_t>(sources.front().theta.size());
  for (const auto& s : sources) {
    if (static_cast<std::size_t>(s.theta.size()) != d) fail(ErrorCode::DimensionMismatch, "sources differ in dimension");
  }
  if (format == SummaryFormat::Json) {
    std::ostringstream os;
    os << "[\n";
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const auto& s = sources[k];
      os << "  {\"id\": " << json(s.id).dump() << ", \"n\": " << s.n << ", \"theta\": [";
      for (std::size_t j = 0; j < d; ++j) os << (j ? ", " : "") << num(s.theta[static_cast<Eigen::Index>(j)]);
      os << "]";
      if (s.cov) {
        os << ", \"cov_tril\": [";
        const auto tril = cov_to_tril(*s.cov);
        for (std::size_t j = 0; j < tril.size(); ++j) os << (j ? ", " : "") << num(tril[j]);
        os << "]";
      }
      os << "}" << (k + 1 < sources.size() ? "," : "") << "\n";
    }
    os << "]\n";
    return os.str();
  }

  bool any_cov = false;
  for (const auto& s : sources) any_cov = any_cov || s.cov.has_value();
  std::ostringstream os;
  os << "source_id,n";
  for (std::size_t j = 1; j <= d; ++j) os << ",theta_" << j;
  if (any_cov) {
    for (std::size_t i = 1; i <= d; ++i)
      for (std::size_t j = 1; j <= i; ++j) os << ",cov_" << i << j;
  }
  os << "\n";
  for (const auto& s : sources) {
    os << csv_quote(s.id) << ',' << s.n;
    for (std::size_t j = 0; j < d; ++j) os << ',' << num(s.theta[static_cast<Eigen::Index>(j)]);
    if (any_cov) {
      if (s.cov) {
        for (double v : cov_to_tril(*s.cov)) os << ',' << num(v);
      } else {
        for (std::size_t c = 0; c < d * (d + 1) / 2; ++c) os << ',';
      }
    }
    os << "\n";
  }
  return os.str();
}

void write_summary_file(const std::string& path, std::span<const SourceSummary> sources,
                        SummaryFormat format) {
  const std::string text = write_summaries(sources, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace rfuse
