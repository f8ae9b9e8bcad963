#include "ltqr/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ltqr/error.hpp"

namespace ltqr::io {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what, std::size_t line,
                    const std::string& field) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw Error(what + " line " + std::to_string(line) + ": cannot parse '" + text + "' as a number",
                field);
  if (!std::isfinite(value))
    throw Error(what + " line " + std::to_string(line) + ": non-finite value", field);
  return value;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

struct Observation {
  double time;
  double y;
  std::size_t line;
};

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string(), field);
  return in;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated draws file", "draws");
  return value;
}

constexpr char kDrawsMagic[8] = {'L', 'T', 'Q', 'R', 'D', 'R', 'A', 'W'};

}  // namespace

LongitudinalDataset read_dataset(std::istream& longitudinal, std::istream& covariates,
                                 IngestReport* report) {
  std::string line;
  if (!read_line(longitudinal, line)) throw Error("longitudinal file is empty", "input");
  if (split_csv(line) != std::vector<std::string>{"subject_id", "time", "y"})
    throw Error("longitudinal header must be 'subject_id,time,y'", "input");

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Observation>> obs;
  for (std::size_t line_no = 2; read_line(longitudinal, line); ++line_no) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3)
      throw Error("longitudinal line " + std::to_string(line_no) + ": expected 3 fields", "input");
    if (fields[0].empty())
      throw Error("longitudinal line " + std::to_string(line_no) + ": empty subject_id", "input");
    Observation o{parse_number(fields[1], "longitudinal", line_no, "time"),
                  parse_number(fields[2], "longitudinal", line_no, "y"), line_no};
    auto [it, inserted] = obs.try_emplace(fields[0]);
    if (inserted) order.push_back(fields[0]);
    it->second.push_back(o);
  }

  if (!read_line(covariates, line)) throw Error("covariate file is empty", "covariates");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "subject_id")
    throw Error("covariate header must start with 'subject_id'", "covariates");
  const bool has_delta = header.size() > 1 && header.back() == "delta";
  std::vector<std::string> names(header.begin() + 1, header.end() - (has_delta ? 1 : 0));
  for (const auto& name : names)
    if (name.empty()) throw Error("covariate header has an empty column name", "covariates");
  const int p = static_cast<int>(names.size()) + 1;

  struct CovRow {
    Eigen::VectorXd x;
    double delta;
  };
  std::vector<std::string> cov_order;
  std::unordered_map<std::string, CovRow> cov;
  for (std::size_t line_no = 2; read_line(covariates, line); ++line_no) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw Error("covariate line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields",
                  "covariates");
    CovRow row{Eigen::VectorXd::Ones(p), 1.0};
    for (int j = 1; j < p; ++j)
      row.x[j] = parse_number(fields[static_cast<std::size_t>(j)], "covariate", line_no, names[static_cast<std::size_t>(j - 1)]);
    if (has_delta) {
      row.delta = parse_number(fields.back(), "covariate", line_no, "delta");
      if (!(row.delta > 0.0))
        throw Error("delta must be positive (covariate line " + std::to_string(line_no) + ")", "delta");
    }
    if (!cov.emplace(fields[0], std::move(row)).second)
      throw Error("covariate line " + std::to_string(line_no) + ": duplicate subject_id " + fields[0],
                  "covariates");
    cov_order.push_back(fields[0]);
  }

  std::vector<std::string> missing_cov;
  std::vector<std::string> missing_obs;
  for (const auto& id : order)
    if (!cov.count(id)) missing_cov.push_back(id);
  for (const auto& id : cov_order)
    if (!obs.count(id)) missing_obs.push_back(id);
  if (!missing_cov.empty() || !missing_obs.empty()) {
    std::string msg = "subjects present in only one file;";
    if (!missing_cov.empty()) msg += " no covariates for: " + join(missing_cov, ", ") + ";";
    if (!missing_obs.empty()) msg += " no observations for: " + join(missing_obs, ", ") + ";";
    throw Error(msg, "subject_id");
  }

  std::vector<SubjectRecord> subjects;
  subjects.reserve(cov_order.size());
  for (const auto& id : cov_order) {
    auto& rows = obs.at(id);
    const bool sorted = std::is_sorted(rows.begin(), rows.end(),
                                       [](const Observation& a, const Observation& b) { return a.time < b.time; });
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Observation& a, const Observation& b) { return a.time < b.time; });
    for (std::size_t j = 1; j < rows.size(); ++j) {
      if (rows[j].time == rows[j - 1].time)
        throw Error("duplicate (subject, time) pair for subject " + id + " at lines " +
                        std::to_string(rows[j - 1].line) + " and " + std::to_string(rows[j].line),
                    "time");
    }
    if (!sorted && report) report->warnings.push_back("subject " + id + ": observation times sorted");

    SubjectRecord rec;
    rec.id = id;
    for (const auto& o : rows) {
      rec.times.push_back(o.time);
      rec.y.push_back(o.y);
    }
    rec.x = cov.at(id).x;
    rec.delta = cov.at(id).delta;
    subjects.push_back(std::move(rec));
  }
  return LongitudinalDataset(std::move(subjects), names);
}

LongitudinalDataset ingest_csv(const std::filesystem::path& longitudinal,
                               const std::filesystem::path& covariates, IngestReport* report) {
  auto lin = open_input(longitudinal, "input");
  auto cin = open_input(covariates, "covariates");
  return read_dataset(lin, cin, report);
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_dataset(const LongitudinalDataset& data, std::ostream& longitudinal,
                   std::ostream& covariates) {
  const LongitudinalDataset canon = data.canonical();
  const auto& names = canon.coefficient_names();
  longitudinal << "subject_id,time,y\n";
  covariates << "subject_id";
  for (std::size_t j = 1; j < names.size(); ++j) covariates << ',' << names[j];
  covariates << ",delta\n";
  for (const auto& s : canon.subjects()) {
    for (std::size_t j = 0; j < s.times.size(); ++j)
      longitudinal << s.id << ',' << format_double(s.times[j]) << ',' << format_double(s.y[j]) << '\n';
    covariates << s.id;
    for (Eigen::Index j = 1; j < s.x.size(); ++j) covariates << ',' << format_double(s.x[j]);
    covariates << ',' << format_double(s.delta) << '\n';
  }
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw Error("row width does not match the table schema", "table");
  rows.push_back(std::move(row));
}

Format parse_format(const std::string& name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  throw Error("unknown output format '" + name + "'", "format");
}

void write_table(const Table& table, std::ostream& out, Format format) {
  if (format == Format::Csv) {
    out << join(table.columns, ",") << '\n';
    for (const auto& row : table.rows) out << join(row, ",") << '\n';
    return;
  }
  // JSON keeps numbers as their 17-digit text so values round-trip exactly.
  json records = json::array();
  for (const auto& row : table.rows) {
    json rec = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string& cell = row[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(v))
        rec[table.columns[c]] = v;
      else if (cell == "true" || cell == "false")
        rec[table.columns[c]] = cell == "true";
      else
        rec[table.columns[c]] = cell;
    }
    records.push_back(std::move(rec));
  }
  out << records.dump(2) << '\n';
}

void write_table(const Table& table, const std::filesystem::path& path, Format format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string(), "output");
  write_table(table, out, format);
}

std::vector<double> parse_grid(const std::string& text, const std::string& field) {
  auto number = [&](const std::string& s) {
    double v = 0.0;
    const std::string t = trim(s);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v))
      throw Error("cannot parse grid value '" + t + "'", field);
    return v;
  };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw Error("grid must be lo:hi:step", field);
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || hi < lo) throw Error("grid needs lo <= hi and step > 0", field);
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) {
      // round to 12 decimals so 0.8 + 3 * 0.1 prints as 1.1
      const double v = lo + static_cast<double>(i) * step;
      grid.push_back(std::round(v * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) grid.push_back(number(part));
  }
  if (grid.empty()) throw Error("grid is empty", field);
  return grid;
}

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t line_no = 1; read_line(in, line); ++line_no) {
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) + ": expected key = value", "config");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty())
      throw Error("config line " + std::to_string(line_no) + ": empty key", "config");
    out[key] = value;
  }
  return out;
}

void write_draws(const ResampleDraws& draws, const std::vector<std::string>& coefficient_names,
                 const std::filesystem::path& path) {
  json header;
  header["format"] = "ltqr-draws";
  header["version"] = kDrawsFormatVersion;
  header["p"] = draws.p();
  header["n_tau"] = draws.tau_grid.size();
  header["n_b_used"] = draws.n_b_used;
  header["n_b_requested"] = draws.n_b_requested;
  header["n_b_dropped"] = draws.n_b_dropped;
  header["alpha"] = draws.alpha;
  header["h"] = draws.h;
  header["seed"] = draws.seed;
  header["tau_grid"] = draws.tau_grid;
  header["coefficient_names"] = coefficient_names;
  header["sigma2_star"] = draws.sigma2_star;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string(), "output");
  out.write(kDrawsMagic, sizeof kDrawsMagic);
  put_le<std::uint32_t>(out, kDrawsFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto put_matrix = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le<double>(out, m.data()[i]);
  };
  put_matrix(draws.beta_hat);
  for (const auto& rep : draws.beta_star) put_matrix(rep);
  if (!out) throw Error("failed writing " + path.string(), "output");
}

PersistedDraws read_draws(const std::filesystem::path& path) {
  auto in = open_input(path, "draws");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kDrawsMagic, sizeof magic) != 0)
    throw Error("not an ltqr draws file: " + path.string(), "draws");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kDrawsFormatVersion)
    throw Error("unsupported draws format version " + std::to_string(version), "draws");
  const auto len = get_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated draws header", "draws");
  const json header = json::parse(text);

  PersistedDraws out;
  auto& d = out.draws;
  const int p = header.at("p").get<int>();
  const auto n_tau = header.at("n_tau").get<Eigen::Index>();
  d.tau_grid = header.at("tau_grid").get<std::vector<double>>();
  d.n_b_used = header.at("n_b_used").get<int>();
  d.n_b_requested = header.at("n_b_requested").get<int>();
  d.n_b_dropped = header.at("n_b_dropped").get<int>();
  d.alpha = header.at("alpha").get<double>();
  d.h = header.at("h").get<double>();
  d.seed = header.at("seed").get<std::uint64_t>();
  d.sigma2_star = header.at("sigma2_star").get<std::vector<double>>();
  out.coefficient_names = header.at("coefficient_names").get<std::vector<std::string>>();
  auto get_matrix = [&] {
    Eigen::MatrixXd m(p, n_tau);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<double>(in);
    return m;
  };
  d.beta_hat = get_matrix();
  for (int r = 0; r < d.n_b_used; ++r) d.beta_star.push_back(get_matrix());
  summarize_draws(d);
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  auto in = open_input(path, "input");
  std::uint64_t hash = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << hash;
  return ss.str();
}

}  // namespace ltqr::io
