#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dial/error.hpp"
#include "dial/net.hpp"

// Format (whitespace separated tokens, one record per line):
//
//   dial-checkpoint 1
//   layers <count>
//   dense <in> <out> | relu | dalayer <variant> <epsilon> <sparse_weight> <affine>
//   params <count>
//   <value>            (one per line)
//   dastate <layer> <train|frozen>
//   frozen <layer> <source|target> <channels> <variant> <epsilon>
//   a <value>...
//   b <value>...
//   end
//
// Every double is printed with %a so reading it back reproduces the bits.

namespace dial {

namespace {

constexpr const char* kMagic = "dial-checkpoint";
constexpr int kVersion = 1;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw Error(ErrorCode::ParseError, "checkpoint: bad number '" + tok + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& tok) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "checkpoint: bad count '" + tok + "'");
  }
}

class TokenReader {
 public:
  explicit TokenReader(const std::string& text) : in_(text) {}

  std::string next() {
    std::string tok;
    if (!(in_ >> tok)) throw Error(ErrorCode::ParseError, "checkpoint: unexpected end of input");
    return tok;
  }

  void expect(const std::string& want) {
    const std::string got = next();
    if (got != want) {
      throw Error(ErrorCode::ParseError, "checkpoint: expected '" + want + "', got '" + got + "'");
    }
  }

 private:
  std::istringstream in_;
};

Domain parse_domain(const std::string& tok) {
  if (tok == "source") return Domain::Source;
  if (tok == "target") return Domain::Target;
  throw Error(ErrorCode::UnknownDomainTag, "checkpoint: unknown domain '" + tok + "'");
}

}  // namespace

std::string checkpoint_to_string(const Network& net, const ParamStore& params) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  const auto& arch = net.architecture();
  out << "layers " << arch.size() << '\n';
  for (const auto& spec : arch) {
    switch (spec.kind) {
      case LayerSpec::Kind::Dense:
        out << "dense " << spec.in << ' ' << spec.out << '\n';
        break;
      case LayerSpec::Kind::Relu:
        out << "relu\n";
        break;
      case LayerSpec::Kind::DaLayer:
        out << "dalayer " << spec.variant.name() << ' ' << hex(spec.variant.epsilon) << ' '
            << hex(spec.sparse_weight) << ' ' << (spec.affine ? 1 : 0) << '\n';
        break;
    }
  }
  out << "params " << params.values.size() << '\n';
  for (double v : params.values) out << hex(v) << '\n';

  for (std::size_t k : net.da_layer_indices()) {
    const DaLayer& da = net.da_layer(k);
    out << "dastate " << k << ' ' << (da.mode() == DaMode::Frozen ? "frozen" : "train") << '\n';
    for (Domain d : kDomains) {
      const auto& p = da.frozen(d);
      if (!p) continue;
      out << "frozen " << k << ' ' << to_string(d) << ' ' << p->channels() << ' '
          << p->variant.name() << ' ' << hex(p->variant.epsilon) << '\n';
      out << 'a';
      for (double v : p->a) out << ' ' << hex(v);
      out << "\nb";
      for (double v : p->b) out << ' ' << hex(v);
      out << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

std::pair<Network, ParamStore> checkpoint_from_string(const std::string& text) {
  TokenReader in(text);
  in.expect(kMagic);
  if (parse_count(in.next()) != static_cast<std::size_t>(kVersion)) {
    throw Error(ErrorCode::ParseError, "checkpoint: unsupported version");
  }
  in.expect("layers");
  const std::size_t n_layers = parse_count(in.next());
  std::vector<LayerSpec> arch;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const std::string kind = in.next();
    if (kind == "dense") {
      const std::size_t i = parse_count(in.next());
      const std::size_t o = parse_count(in.next());
      arch.push_back(LayerSpec::dense(i, o));
    } else if (kind == "relu") {
      arch.push_back(LayerSpec::relu());
    } else if (kind == "dalayer") {
      const std::string vname = in.next();
      const double eps = parse_double(in.next());
      const double sw = parse_double(in.next());
      const bool affine = parse_count(in.next()) != 0;
      arch.push_back(LayerSpec::dalayer(ReferenceVariant::parse(vname, eps), sw, affine));
    } else {
      throw Error(ErrorCode::ParseError, "checkpoint: unknown layer kind '" + kind + "'");
    }
  }
  auto [net, params] = Network::build(arch, 0);

  in.expect("params");
  const std::size_t n_params = parse_count(in.next());
  if (n_params != params.size()) {
    throw Error(ErrorCode::ParseError, "checkpoint: parameter count does not match architecture");
  }
  for (auto& v : params.values) v = parse_double(in.next());

  std::vector<std::pair<std::size_t, DaMode>> modes;
  for (std::string tok = in.next(); tok != "end"; tok = in.next()) {
    if (tok == "dastate") {
      const std::size_t k = parse_count(in.next());
      const std::string m = in.next();
      if (m != "train" && m != "frozen") {
        throw Error(ErrorCode::ParseError, "checkpoint: bad DA mode '" + m + "'");
      }
      modes.emplace_back(k, m == "frozen" ? DaMode::Frozen : DaMode::Train);
    } else if (tok == "frozen") {
      const std::size_t k = parse_count(in.next());
      const Domain d = parse_domain(in.next());
      const std::size_t c = parse_count(in.next());
      const std::string vname = in.next();
      const double eps = parse_double(in.next());
      AlignParams p;
      p.variant = ReferenceVariant::parse(vname, eps);
      in.expect("a");
      for (std::size_t i = 0; i < c; ++i) p.a.push_back(parse_double(in.next()));
      in.expect("b");
      for (std::size_t i = 0; i < c; ++i) p.b.push_back(parse_double(in.next()));
      net.da_layer(k).freeze(d, std::move(p));
    } else {
      throw Error(ErrorCode::ParseError, "checkpoint: unexpected record '" + tok + "'");
    }
  }
  for (const auto& [k, m] : modes) net.da_layer(k).set_mode(m);
  return {std::move(net), std::move(params)};
}

void save_checkpoint(const std::string& path, const Network& net, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << checkpoint_to_string(net, params);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::pair<Network, ParamStore> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace dial
