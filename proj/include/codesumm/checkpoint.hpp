#pragma once

#include <string>
#include <variant>

#include "codesumm/seq2seq.hpp"
#include "codesumm/transformer.hpp"

namespace codesumm {

enum class ModelKind { kSeq2Seq, kTransformer };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

using AnyModel = std::variant<Seq2SeqModel, TransformerModel>;

inline ModelKind kind_of(const AnyModel& model) {
  return model.index() == 0 ? ModelKind::kSeq2Seq : ModelKind::kTransformer;
}

/// Binary checkpoint, little-endian throughout:
///   "DSUM" | u32 version | model kind | config key=value block |
///   u32 tensor count | { name | u32 rank | u64 dims[] | f32 data[] }...
/// Parameters are kept on the float32 grid in memory, so the 32-bit
/// payload round-trips values exactly.
void save_checkpoint(const Seq2SeqModel& model, const std::string& path);
void save_checkpoint(const TransformerModel& model, const std::string& path);
void save_checkpoint(const AnyModel& model, const std::string& path);

/// Rebuilds the model from the header config and named tensors. Raises
/// FormatError on magic/version mismatch, truncation, unknown or missing
/// tensors, or shapes that disagree with the config.
AnyModel load_checkpoint(const std::string& path);

}  // namespace codesumm
