#include "fpmt/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "fpmt/error.hpp"

namespace fpmt {
namespace {

constexpr const char* kMagic = "FPMT-CKPT v1";

void write_matrix_line(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (double v : m.data()) out << ' ' << format_real(v);
  out << '\n';
}

double to_real(const std::string& tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError("bad real '" + tok + "'", line);
  return v;
}

std::size_t to_count(const std::string& tok, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError("bad count '" + tok + "'", line);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Encoder& encoder, const NormStats& norm) {
  const auto& c = encoder.config();
  out << kMagic << '\n';
  out << "d=" << c.input_dim << " H=" << c.depth << " width=" << c.width << " activation=" << to_string(c.activation)
      << " E=" << c.effective_mix_layer() << " C=" << c.class_count << '\n';
  for (const auto& [name, var] : encoder.parameters()) write_matrix_line(out, name, var.value());
  if (!norm.empty()) {
    const std::size_t k = norm.kept.size();
    write_matrix_line(out, "norm.raw_dim", Matrix(1, 1, static_cast<double>(norm.raw_dim)));
    Matrix kept(1, k);
    for (std::size_t i = 0; i < k; ++i) kept[i] = static_cast<double>(norm.kept[i]);
    write_matrix_line(out, "norm.kept", kept);
    write_matrix_line(out, "norm.mean", Matrix(1, k, norm.mean));
    write_matrix_line(out, "norm.std", Matrix(1, k, norm.stddev));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != kMagic) throw ParseError("missing '" + std::string(kMagic) + "' header", 1);

  ++lineno;
  if (!std::getline(in, line)) throw ParseError("missing config line", lineno);
  std::map<std::string, std::string> fields;
  {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw ParseError("config token '" + tok + "' lacks '='", lineno);
      fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  auto field = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError(std::string("config line missing ") + key, lineno);
    return it->second;
  };
  EncoderConfig cfg;
  cfg.input_dim = to_count(field("d"), lineno);
  cfg.depth = to_count(field("H"), lineno);
  cfg.width = to_count(field("width"), lineno);
  cfg.activation = parse_activation(field("activation"));
  cfg.mix_layer = to_count(field("E"), lineno);
  cfg.class_count = to_count(field("C"), lineno);

  std::map<std::string, Matrix> mats;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name, rows_tok, cols_tok;
    if (!(ss >> name >> rows_tok >> cols_tok)) throw ParseError("malformed parameter line", lineno);
    const std::size_t r = to_count(rows_tok, lineno), c = to_count(cols_tok, lineno);
    std::vector<double> values;
    values.reserve(r * c);
    std::string tok;
    while (ss >> tok) values.push_back(to_real(tok, lineno));
    if (values.size() != r * c) {
      throw ParseError("parameter '" + name + "' has " + std::to_string(values.size()) + " values, expected " +
                       std::to_string(r * c), lineno);
    }
    if (mats.count(name)) throw ParseError("duplicate parameter '" + name + "'", lineno);
    mats.emplace(name, Matrix(r, c, std::move(values)));
  }

  Checkpoint ck{Encoder::zeros(cfg), {}};
  for (auto& [name, var] : ck.encoder.parameters()) {
    auto it = mats.find(name);
    if (it == mats.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
    if (!it->second.same_shape(var.value())) {
      throw DimensionError("checkpoint parameter '" + name + "' has shape " + it->second.shape_string() +
                           ", expected " + var.value().shape_string());
    }
    var.mutable_value() = it->second;
  }
  if (mats.count("norm.kept")) {
    const Matrix& kept = mats.at("norm.kept");
    ck.norm.raw_dim = static_cast<std::size_t>(mats.at("norm.raw_dim")[0]);
    for (double v : kept.data()) ck.norm.kept.push_back(static_cast<std::size_t>(v));
    const auto mean = mats.at("norm.mean").data();
    const auto sd = mats.at("norm.std").data();
    ck.norm.mean.assign(mean.begin(), mean.end());
    ck.norm.stddev.assign(sd.begin(), sd.end());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Encoder& encoder, const NormStats& norm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, encoder, norm);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace fpmt
