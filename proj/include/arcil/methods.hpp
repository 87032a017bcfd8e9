#pragma once

#include "arcil/attacks.hpp"
#include "arcil/autodiff.hpp"
#include "arcil/network.hpp"
#include "arcil/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace arcil {

enum class MethodKind {
  kPgdAt,
  kTrades,
  kMart,
  kIArd,
  kIRslad,
  kIAdaad,
  kRLwf,
  kRLwfMc,
  kREwcOn,
  kRSi,
  kREr,
  kRErAce,
  kRDer,
  kRDerPlusPlus,
  kRIcarl,
  kFlair,
  kFlairPlus,
};

enum class MethodFamily { kAdversarialTraining, kAdversarialDistillation, kNonRehearsal, kRehearsal, kFlair };

enum class BufferKind { kNone, kHerding, kReservoir, kReservoirWithLogits };

enum class FpdMetric { kKl, kMse };

std::string method_name(MethodKind kind);
MethodKind parse_method(const std::string& name);
MethodFamily method_family(MethodKind kind);
std::vector<MethodKind> all_methods();
std::string buffer_kind_name(BufferKind kind);
BufferKind parse_buffer_kind(const std::string& name);
std::string fpd_metric_name(FpdMetric m);
FpdMetric parse_fpd_metric(const std::string& name);

/// Whether the method reads a teacher.
bool uses_teacher(MethodKind kind);

struct MethodConfig {
  MethodKind kind = MethodKind::kPgdAt;
  double alpha = 0.0;
  double beta = 0.0;
  BufferKind buffer_kind = BufferKind::kNone;
  AttackConfig attack;
  bool augment = false;
  FpdMetric fpd_metric = FpdMetric::kKl;
  double ewc_decay = 0.9;
  double si_damping = 0.1;

  /// Throws ConfigError for negative or non-finite coefficients and for a
  /// buffer kind the method cannot use.
  void validate() const;
};

/// Published trade-off coefficients and the buffer kind each method expects
/// (herding-capable methods default to no buffer).
MethodConfig default_method_config(MethodKind kind);

/// Buffer kinds a method accepts.
std::vector<BufferKind> allowed_buffers(MethodKind kind);

/// The student as it sits on a tape: parameters bound once, forwarded as
/// often as a loss needs.
struct StudentGraph {
  const Network& net;
  const Network::Bound& params;
  ad::Tape& tape;

  ad::Var logits(const Tensor& x) const { return net.forward(params, tape.constant(x)); }
};

struct Batch {
  Tensor x{std::vector<std::size_t>{0, 0}};
  std::vector<int> y;
  std::size_t size() const { return y.size(); }
};

/// A replay minibatch. `z` holds logits stored at insertion, zero-padded to
/// [n, widest]; `z_width[r]` is row r's own width (all full when empty).
/// Both are empty when the buffer keeps no logits.
struct BufferBatch {
  Tensor x{std::vector<std::size_t>{0, 0}};
  std::vector<int> y;
  Tensor z{std::vector<std::size_t>{0, 0}};
  std::vector<std::size_t> z_width;
  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
};

/// Parameter-penalty state for the online-EWC and SI baselines.
struct RegState {
  ParamView anchor;     // θ at the start of the current task
  ParamView fisher;     // running diagonal Fisher (EWC-on)
  ParamView omega;      // consolidated importances (SI)
  ParamView path;       // running −g·Δθ for the current task (SI)
  bool initialized = false;
};

/// Sets the anchor to the student's parameters and carries importances over
/// to the student's (possibly grown) layout; new entries start at zero.
void begin_task(RegState& reg, const Network& student);

/// Σ w_i (θ_i − θ*_i)² on the tape, where w is the Fisher (EWC-on) or ω (SI).
ad::Var reg_penalty(const StudentGraph& s, const ParamView& weights, const ParamView& anchor);

/// Copies every parameter of `from` into a view with `like`'s layout;
/// entries outside `from`'s layer shapes are zero.
ParamView remap_params(const ParamView& from, const ParamView& like);

/// fisher ← γ·fisher + mean over examples of squared per-example gradients
/// of CE at the given (adversarial) inputs.
void update_ewc(RegState& reg, const Network& student, const Tensor& x_adv, std::span<const int> labels,
                double decay);

/// Accumulates −g·Δθ for one optimizer step.
void si_step(RegState& reg, const ParamView& grad, const ParamView& before, const ParamView& after);

/// ω += max(path, 0) / ((θ_end − θ_start)² + ξ), then clears the path.
void si_consolidate(RegState& reg, const Network& student, double damping);

// Loss builders. Each returns a scalar on the student's tape.

ad::Var loss_at_family(const MethodConfig& cfg, const StudentGraph& s, const Batch& batch, const Tensor& x_adv);

ad::Var loss_iad_family(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher, const Batch& batch,
                        const Tensor& x_adv);

ad::Var loss_rcil_nonrehearsal(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher,
                               const RegState* reg, const Batch& batch, const Tensor& x_adv);

/// For r-icarl, `batch` is already drawn from the merged pool and
/// `buffer` is unused.
ad::Var loss_rcil_rehearsal(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher,
                            const Batch& batch, const BufferBatch& buffer, const Tensor& x_adv,
                            const Tensor& x_adv_buffer);

/// New-slice BCE against one-hot labels plus α times old-slice BCE against
/// the teacher's sigmoid outputs, both at x_adv.
ad::Var loss_adsl(const StudentGraph& s, const Network* teacher, const Tensor& x_adv, std::span<const int> labels,
                  double alpha);

/// Divergence between the teacher's and the student's old-slice output
/// change from x to x_adv.
ad::Var loss_fpd(const StudentGraph& s, const Network* teacher, const Tensor& x, const Tensor& x_adv,
                 FpdMetric metric = FpdMetric::kKl);

ad::Var loss_flair(const StudentGraph& s, const Network* teacher, const Tensor& x, const Tensor& x_adv,
                   std::span<const int> labels, double alpha, double beta, FpdMetric metric = FpdMetric::kKl);

/// Dispatches to the family builder for cfg.kind.
ad::Var method_loss(const MethodConfig& cfg, const StudentGraph& s, const Network* teacher, const RegState* reg,
                    const Batch& batch, const Tensor& x_adv, const BufferBatch& buffer, const Tensor& x_adv_buffer);

}  // namespace arcil
