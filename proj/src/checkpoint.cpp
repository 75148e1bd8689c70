#include "codesumm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "codesumm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace codesumm {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'U', 'M'};
constexpr std::uint32_t kVersion = 1;

// ---- primitive writers / readers ----

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, (std::uint32_t)s.size());
  out.write(s.data(), (std::streamsize)s.size());
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint: truncated file");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint: truncated file");
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  if (n > (1u << 20)) throw FormatError("checkpoint: implausible string size");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("checkpoint: truncated file");
  return s;
}

// ---- config <-> key=value text ----

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("checkpoint: malformed config line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& kv_get(const std::map<std::string, std::string>& kv,
                          const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    throw FormatError("checkpoint: config key '" + key + "' missing");
  }
  return it->second;
}

std::size_t kv_size(const std::map<std::string, std::string>& kv,
                    const std::string& key) {
  return (std::size_t)std::stoull(kv_get(kv, key));
}

std::string config_text(const Seq2SeqConfig& c) {
  std::ostringstream os;
  os << "src_vocab_size=" << c.src_vocab_size << '\n'
     << "tgt_vocab_size=" << c.tgt_vocab_size << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "hidden_dim=" << c.hidden_dim << '\n'
     << "dropout=" << format_double(c.dropout) << '\n'
     << "max_decode_len=" << c.max_decode_len << '\n';
  return os.str();
}

std::string config_text(const TransformerConfig& c) {
  std::ostringstream os;
  os << "n_layers=" << c.n_layers << '\n'
     << "d_model=" << c.d_model << '\n'
     << "n_heads=" << c.n_heads << '\n'
     << "d_k=" << c.head_dim_k() << '\n'
     << "d_v=" << c.head_dim_v() << '\n'
     << "d_ff=" << c.d_ff << '\n'
     << "src_vocab_size=" << c.src_vocab_size << '\n'
     << "tgt_vocab_size=" << c.tgt_vocab_size << '\n'
     << "dropout=" << format_double(c.dropout) << '\n'
     << "max_len=" << c.max_len << '\n'
     << "use_positional=" << (c.use_positional ? 1 : 0) << '\n';
  return os.str();
}

Seq2SeqConfig seq2seq_config_from(const std::map<std::string, std::string>& kv) {
  Seq2SeqConfig c;
  c.src_vocab_size = kv_size(kv, "src_vocab_size");
  c.tgt_vocab_size = kv_size(kv, "tgt_vocab_size");
  c.embed_dim = kv_size(kv, "embed_dim");
  c.hidden_dim = kv_size(kv, "hidden_dim");
  c.dropout = std::stod(kv_get(kv, "dropout"));
  c.max_decode_len = kv_size(kv, "max_decode_len");
  return c;
}

TransformerConfig transformer_config_from(
    const std::map<std::string, std::string>& kv) {
  TransformerConfig c;
  c.n_layers = kv_size(kv, "n_layers");
  c.d_model = kv_size(kv, "d_model");
  c.n_heads = kv_size(kv, "n_heads");
  c.d_k = kv_size(kv, "d_k");
  c.d_v = kv_size(kv, "d_v");
  c.d_ff = kv_size(kv, "d_ff");
  c.src_vocab_size = kv_size(kv, "src_vocab_size");
  c.tgt_vocab_size = kv_size(kv, "tgt_vocab_size");
  c.dropout = std::stod(kv_get(kv, "dropout"));
  c.max_len = kv_size(kv, "max_len");
  c.use_positional = kv_get(kv, "use_positional") != "0";
  return c;
}

// ---- tensor payload ----

void write_model(const std::string& path, ModelKind kind,
                 const std::string& config,
                 const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_string(out, to_string(kind));
  write_string(out, config);
  write_u32(out, (std::uint32_t)tensors.size());
  for (const auto& [name, tensor] : tensors) {
    write_string(out, name);
    write_u32(out, (std::uint32_t)tensor.rank());
    for (std::size_t d : tensor.shape()) write_u64(out, (std::uint64_t)d);
    std::vector<float> data(tensor.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = (float)tensor.values()[i];
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              (std::streamsize)(data.size() * sizeof(float)));
  }
  if (!out) throw FormatError("checkpoint: write to " + path + " failed");
}

struct RawFile {
  ModelKind kind;
  std::map<std::string, std::string> config;
  std::map<std::string, Tensor> tensors;
};

RawFile read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: " + path + " has a bad magic header");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported format version " +
                      std::to_string(version));
  }
  RawFile file;
  file.kind = parse_model_kind(read_string(in));
  file.config = parse_kv(read_string(in));
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back((std::size_t)read_u64(in));
      n *= shape.back();
    }
    std::vector<float> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            (std::streamsize)(n * sizeof(float)));
    if (!in) throw FormatError("checkpoint: truncated tensor '" + name + "'");
    std::vector<double> values(data.begin(), data.end());
    if (!file.tensors.emplace(name, Tensor::from_values(shape, values))
             .second) {
      throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  return file;
}

// Copies file tensors into a freshly built model, checking names/shapes.
template <typename Model>
void fill_from_file(Model& model, const RawFile& file) {
  auto params = model.named_parameters();
  if (params.size() != file.tensors.size()) {
    throw FormatError("checkpoint: expected " +
                      std::to_string(params.size()) + " tensors, found " +
                      std::to_string(file.tensors.size()));
  }
  for (auto& [name, tensor] : params) {
    const auto it = file.tensors.find(name);
    if (it == file.tensors.end()) {
      throw FormatError("checkpoint: tensor '" + name + "' missing");
    }
    if (it->second.shape() != tensor.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' is " +
                        shape_str(it->second.shape()) + " but the config " +
                        "implies " + shape_str(tensor.shape()));
    }
    tensor.values() = it->second.values();
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kSeq2Seq ? "seq2seq" : "transformer";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "seq2seq") return ModelKind::kSeq2Seq;
  if (name == "transformer") return ModelKind::kTransformer;
  throw FormatError("unknown model kind '" + name + "'");
}

void save_checkpoint(const Seq2SeqModel& model, const std::string& path) {
  write_model(path, ModelKind::kSeq2Seq, config_text(model.config()),
              model.named_parameters());
}

void save_checkpoint(const TransformerModel& model, const std::string& path) {
  write_model(path, ModelKind::kTransformer, config_text(model.config()),
              model.named_parameters());
}

void save_checkpoint(const AnyModel& model, const std::string& path) {
  std::visit([&](const auto& m) { save_checkpoint(m, path); }, model);
}

AnyModel load_checkpoint(const std::string& path) {
  RawFile file = read_model(path);
  if (file.kind == ModelKind::kSeq2Seq) {
    Seq2SeqModel model(seq2seq_config_from(file.config), /*init_seed=*/0);
    fill_from_file(model, file);
    return model;
  }
  TransformerModel model(transformer_config_from(file.config),
                         /*init_seed=*/0);
  fill_from_file(model, file);
  return model;
}

}  // namespace codesumm
