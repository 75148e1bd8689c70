#include "codesumm/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "codesumm/errors.hpp"
#include "codesumm/metrics.hpp"
#include "codesumm/tokenizer.hpp"

namespace codesumm {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string epoch_checkpoint_path(const std::string& out_dir,
                                  std::size_t epoch) {
  std::ostringstream os;
  os << out_dir << "/epoch_" << std::setfill('0') << std::setw(4) << epoch
     << ".ckpt";
  return os.str();
}

template <typename Model>
double perplexity_of(const Model& model, const std::vector<Batch>& batches) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const Batch& b : batches) {
    LossInfo info = model.teacher_forced_loss(b, 0.0, nullptr);
    total += info.loss.item() * (double)info.token_count;
    tokens += info.token_count;
  }
  return perplexity(total, tokens);
}

template <typename Model>
TrainRun train_model(Model model, ModelKind kind,
                     const std::vector<EncodedPair>& train_pairs,
                     const std::vector<EncodedPair>& val_pairs,
                     const TrainHyper& hyper, const std::string& out_dir,
                     std::ostream* log) {
  if (train_pairs.empty()) {
    throw std::invalid_argument("train: empty training corpus");
  }
  fs::create_directories(out_dir);
  std::ofstream jsonl(out_dir + "/train_log.jsonl", std::ios::binary);

  std::vector<Tensor> param_list;
  for (auto& [name, t] : model.named_parameters()) param_list.push_back(t);
  AdamOptimizer optimizer(param_list, {hyper.lr});

  const std::vector<Batch> val_batches =
      val_pairs.empty() ? std::vector<Batch>{}
                        : make_batches(val_pairs, hyper.batch_size, 0);

  std::mt19937_64 dropout_rng(hyper.seed ^ 0x9e3779b97f4a7c15ull);
  TrainRun run;
  run.hyper = hyper;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto batches =
        make_batches(train_pairs, hyper.batch_size, hyper.seed + epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    const auto start = Clock::now();
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      GradTape tape;
      LossInfo info;
      try {
        TapeScope scope(tape);
        info = model.teacher_forced_loss(batches[bi], hyper.dropout,
                                         &dropout_rng);
        if (!std::isfinite(info.loss.item())) {
          throw std::runtime_error("loss is not finite");
        }
        optimizer.zero_grad();
        tape.backward(info.loss);
      } catch (const std::runtime_error& e) {
        throw DivergedError(bi, "train: diverged at batch " +
                                    std::to_string(bi) + " of epoch " +
                                    std::to_string(epoch) + ": " + e.what());
      }
      optimizer.clip_global_norm(hyper.clip_norm);
      optimizer.step();
      epoch_loss += info.loss.item() * (double)info.token_count;
      epoch_tokens += info.token_count;
    }
    const double wall = seconds_since(start);

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / (double)epoch_tokens;
    record.wall_seconds = wall;
    record.val_ppl = val_batches.empty()
                         ? std::exp(record.train_loss)
                         : perplexity_of(model, val_batches);
    run.epochs.push_back(record);
    run.final_val_ppl = record.val_ppl;

    const std::string ckpt = epoch_checkpoint_path(out_dir, epoch);
    save_checkpoint(model, ckpt);
    if (record.val_ppl < run.best_val_ppl) {
      run.best_val_ppl = record.val_ppl;
      run.best_epoch = epoch;
      run.best_checkpoint_path = ckpt;
    }

    nlohmann::json j = {{"epoch", record.epoch},
                        {"train_loss", record.train_loss},
                        {"val_ppl", record.val_ppl},
                        {"wall_seconds", record.wall_seconds}};
    jsonl << j.dump() << '\n';
    jsonl.flush();
    if (log) {
      (*log) << "epoch " << record.epoch << " train_loss "
             << record.train_loss << " val_ppl " << record.val_ppl << " ("
             << record.wall_seconds << "s)\n";
    }
  }
  if (!run.best_checkpoint_path.empty()) {
    fs::copy_file(run.best_checkpoint_path, out_dir + "/best.ckpt",
                  fs::copy_options::overwrite_existing);
  }
  (void)kind;
  return run;
}

}  // namespace

// ---------------- optimizer ----------------

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
    p.grad();  // allocate so a zero-gradient step is well-defined
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double AdamOptimizer::clip_global_norm(double max_norm) {
  double sq = 0.0;
  for (Tensor& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Tensor& p : params_) {
      for (double& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, (double)t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, (double)t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& vals = params_[i].values();
    const auto& grads = params_[i].grad();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = grads[j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      vals[j] = snap_to_f32(vals[j] -
                            config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

// ---------------- train / grid search ----------------

TrainRun train(const ModelConfig& config,
               const std::vector<EncodedPair>& train_pairs,
               const std::vector<EncodedPair>& val_pairs,
               const TrainHyper& hyper, const std::string& out_dir,
               std::ostream* log) {
  return std::visit(
      [&](const auto& c) {
        using Config = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<Config, Seq2SeqConfig>) {
          return train_model(Seq2SeqModel(c, hyper.seed),
                             ModelKind::kSeq2Seq, train_pairs, val_pairs,
                             hyper, out_dir, log);
        } else {
          return train_model(TransformerModel(c, hyper.seed),
                             ModelKind::kTransformer, train_pairs, val_pairs,
                             hyper, out_dir, log);
        }
      },
      config);
}

std::size_t GridSpec::point_count() const {
  auto axis = [](std::size_t n) { return n ? n : 1; };
  return axis(learning_rates.size()) * axis(n_layers.size()) *
         axis(d_models.size()) * axis(heads.size()) * axis(batches.size());
}

std::vector<TrainRun> grid_search(const ModelConfig& base, const GridSpec& grid,
                                  const std::vector<EncodedPair>& train_pairs,
                                  const std::vector<EncodedPair>& val_pairs,
                                  std::size_t budget_epochs,
                                  const std::string& out_dir,
                                  std::ostream* log) {
  if (grid.point_count() == 0) {
    throw std::invalid_argument("grid_search: empty grid");
  }
  const bool is_seq2seq = std::holds_alternative<Seq2SeqConfig>(base);
  if (is_seq2seq && (!grid.n_layers.empty() || !grid.heads.empty())) {
    throw std::invalid_argument(
        "grid_search: layer/head axes do not apply to the recurrent model");
  }

  auto axis_or = [](const std::vector<std::size_t>& axis,
                    std::size_t fallback) {
    return axis.empty() ? std::vector<std::size_t>{fallback} : axis;
  };
  const std::vector<double> lrs =
      grid.learning_rates.empty() ? std::vector<double>{1e-4}
                                  : grid.learning_rates;

  std::vector<TrainRun> runs;
  std::size_t point = 0;
  for (double lr : lrs) {
    std::vector<std::size_t> layer_axis, d_axis, head_axis, batch_axis;
    if (is_seq2seq) {
      const auto& c = std::get<Seq2SeqConfig>(base);
      layer_axis = {1};
      d_axis = axis_or(grid.d_models, c.hidden_dim);
      head_axis = {1};
      batch_axis = axis_or(grid.batches, 32);
    } else {
      const auto& c = std::get<TransformerConfig>(base);
      layer_axis = axis_or(grid.n_layers, c.n_layers);
      d_axis = axis_or(grid.d_models, c.d_model);
      head_axis = axis_or(grid.heads, c.n_heads);
      batch_axis = axis_or(grid.batches, 32);
    }
    for (std::size_t n : layer_axis) {
      for (std::size_t d : d_axis) {
        for (std::size_t h : head_axis) {
          for (std::size_t batch : batch_axis) {
            ModelConfig config = base;
            std::ostringstream label;
            if (is_seq2seq) {
              auto& c = std::get<Seq2SeqConfig>(config);
              c.embed_dim = d;
              c.hidden_dim = d;
              label << "lr=" << lr << " hidden=" << d << " batch=" << batch;
            } else {
              auto& c = std::get<TransformerConfig>(config);
              c.n_layers = n;
              c.d_model = d;
              c.n_heads = h;
              c.d_k = 0;  // re-derive d_model / h
              c.d_v = 0;
              label << "lr=" << lr << " N=" << n << " d_model=" << d
                    << " h=" << h << " batch=" << batch;
            }
            TrainHyper hyper;
            hyper.lr = lr;
            hyper.epochs = budget_epochs;
            hyper.batch_size = batch;
            hyper.seed = 1 + point;
            const std::string dir =
                out_dir + "/point_" + std::to_string(point);
            TrainRun run;
            try {
              run = train(config, train_pairs, val_pairs, hyper, dir, log);
            } catch (const std::exception& e) {
              run.status = std::string("failed: ") + e.what();
              run.hyper = hyper;
            }
            run.label = label.str();
            runs.push_back(std::move(run));
            ++point;
          }
        }
      }
    }
  }
  std::stable_sort(runs.begin(), runs.end(),
                   [](const TrainRun& a, const TrainRun& b) {
                     const double pa = a.status == "ok"
                                           ? a.final_val_ppl
                                           : std::numeric_limits<double>::infinity();
                     const double pb = b.status == "ok"
                                           ? b.final_val_ppl
                                           : std::numeric_limits<double>::infinity();
                     return pa < pb;
                   });
  return runs;
}

// ---------------- evaluation ----------------

double dataset_perplexity(const Seq2SeqModel& model,
                          const std::vector<Batch>& batches) {
  return perplexity_of(model, batches);
}

double dataset_perplexity(const TransformerModel& model,
                          const std::vector<Batch>& batches) {
  return perplexity_of(model, batches);
}

double dataset_perplexity(const AnyModel& model,
                          const std::vector<Batch>& batches) {
  return std::visit(
      [&](const auto& m) { return perplexity_of(m, batches); }, model);
}

EvalResult evaluate_model(const AnyModel& model, const TokenizedCorpus& test,
                          const Vocabulary& src_vocab,
                          const Vocabulary& tgt_vocab, std::size_t batch_size,
                          std::size_t n_threads) {
  if (test.pairs.empty()) {
    throw std::invalid_argument("evaluate: empty test corpus");
  }
  const std::size_t max_len = kMaxCommentTokens + 1;
  std::vector<std::vector<std::string>> candidates(test.pairs.size());
  std::vector<std::vector<std::string>> references(test.pairs.size());
  for (std::size_t i = 0; i < test.pairs.size(); ++i) {
    references[i] = test.pairs[i].comment;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= test.pairs.size()) break;
      const TokenSequence src =
          make_sequence(test.pairs[i].method, src_vocab);
      const SummaryResult result = std::visit(
          [&](const auto& m) {
            return greedy_decode(m, src, tgt_vocab, max_len);
          },
          model);
      candidates[i] = result.tokens;
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalResult out;
  out.n_examples = test.pairs.size();
  out.bleu = corpus_bleu(candidates, references);
  const auto encoded = encode_corpus(test, src_vocab, tgt_vocab);
  out.perplexity =
      dataset_perplexity(model, make_batches(encoded, batch_size, 0));
  return out;
}

}  // namespace codesumm
