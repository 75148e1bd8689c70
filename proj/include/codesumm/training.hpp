#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "codesumm/checkpoint.hpp"
#include "codesumm/corpus.hpp"
#include "codesumm/decoding.hpp"
#include "codesumm/tensor.hpp"

namespace codesumm {

struct AdamConfig {
  double lr = 1e-4;  // static learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive moment estimation over a fixed parameter list. Updated values
/// are snapped to the float32 grid so checkpoints stay lossless.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config);
  void step();
  void zero_grad();
  /// Scales every gradient so the global norm is at most max_norm;
  /// returns the pre-clip norm.
  double clip_global_norm(double max_norm);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

struct TrainHyper {
  double lr = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double dropout = 0.1;
  double clip_norm = 5.0;
};

struct EpochRecord {
  std::size_t epoch = 0;     // 1-based
  double train_loss = 0.0;   // mean CE per target token
  double val_ppl = 0.0;
  double wall_seconds = 0.0;  // training phase only, validation excluded
};

struct TrainRun {
  std::vector<EpochRecord> epochs;
  std::string best_checkpoint_path;
  std::size_t best_epoch = 0;
  double best_val_ppl = std::numeric_limits<double>::infinity();
  double final_val_ppl = std::numeric_limits<double>::infinity();
  std::string status = "ok";  // or "failed: <reason>"
  std::string label;          // grid-point description
  TrainHyper hyper;
};

using ModelConfig = std::variant<Seq2SeqConfig, TransformerConfig>;

/// Per epoch: seeded shuffle, teacher-forced loss per batch, clipped
/// gradient step, then validation perplexity; a checkpoint is written
/// each epoch and the best-validation epoch is flagged. A non-finite
/// loss aborts with DivergedError naming the batch index. Epoch records
/// are appended to <out_dir>/train_log.jsonl and echoed to `log`.
TrainRun train(const ModelConfig& config,
               const std::vector<EncodedPair>& train_pairs,
               const std::vector<EncodedPair>& val_pairs,
               const TrainHyper& hyper, const std::string& out_dir,
               std::ostream* log = nullptr);

/// Cartesian grid over the named axes; empty axes keep the base value.
/// n_layers/d_models/heads apply to the transformer; for the recurrent
/// model d_models sets embed and hidden width and the other two must be
/// empty.
struct GridSpec {
  std::vector<double> learning_rates;
  std::vector<std::size_t> n_layers;
  std::vector<std::size_t> d_models;
  std::vector<std::size_t> heads;
  std::vector<std::size_t> batches;

  std::size_t point_count() const;
};

/// One TrainRun per grid point, ranked by final validation perplexity
/// ascending; failed runs are marked and rank last instead of aborting
/// the sweep.
std::vector<TrainRun> grid_search(const ModelConfig& base, const GridSpec& grid,
                                  const std::vector<EncodedPair>& train_pairs,
                                  const std::vector<EncodedPair>& val_pairs,
                                  std::size_t budget_epochs,
                                  const std::string& out_dir,
                                  std::ostream* log = nullptr);

double dataset_perplexity(const Seq2SeqModel& model,
                          const std::vector<Batch>& batches);
double dataset_perplexity(const TransformerModel& model,
                          const std::vector<Batch>& batches);
double dataset_perplexity(const AnyModel& model,
                          const std::vector<Batch>& batches);

struct EvalResult {
  double bleu = 0.0;        // in [0, 1]
  double perplexity = 0.0;  // teacher-forced test perplexity
  std::size_t n_examples = 0;
};

/// Greedy-decodes every test source (optionally across threads), scores
/// corpus BLEU against the references, and reports teacher-forced test
/// perplexity.
EvalResult evaluate_model(const AnyModel& model, const TokenizedCorpus& test,
                          const Vocabulary& src_vocab,
                          const Vocabulary& tgt_vocab, std::size_t batch_size,
                          std::size_t n_threads = 1);

}  // namespace codesumm
