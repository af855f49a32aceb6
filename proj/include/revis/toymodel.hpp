#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "revis/matrix.hpp"
#include "revis/steering.hpp"
#include "revis/vectors.hpp"

namespace revis {

using Token = std::uint32_t;

inline constexpr Token kPadToken = 0;
inline constexpr Token kBosToken = 1;
inline constexpr Token kEosToken = 2;
inline constexpr Token kImgToken = 3;

struct ToyModelSpec {
  std::size_t vocab_size = 64;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 8;
  std::size_t num_heads = 4;
  std::size_t max_seq = 64;
  std::uint64_t seed = 0;

  /// Throws InvalidSpec.
  void validate() const;
  bool operator==(const ToyModelSpec&) const = default;
};

/// Missing keys keep their defaults; unknown keys are rejected.
ToyModelSpec toy_spec_from_json(const nlohmann::json& j);
nlohmann::json toy_spec_to_json(const ToyModelSpec& spec);

/// Called once per layer with the output state of the current last position,
/// before that state feeds the next layer.
using LayerHook = std::function<void(std::size_t layer, std::span<double> state)>;

struct ForwardResult {
  Matrix logits;                    // (seq, vocab_size)
  std::vector<Vector> layer_states;  // last position, per layer, after hooks
};

/// Pre-norm decoder: token embedding + sinusoidal positions, then per layer
/// x += Attn(RMSNorm(x)); x += MLP(RMSNorm(x)), and a final RMSNorm + head.
/// Weights are f32 drawn from SplitMix64; activations are f64.
class ToyModel {
 public:
  static ToyModel build(const ToyModelSpec& spec);

  const ToyModelSpec& spec() const noexcept { return spec_; }
  std::span<const float> weights() const noexcept { return weights_; }

  void save_weights(const std::filesystem::path& path) const;
  static ToyModel load_weights(const std::filesystem::path& path);

  /// Incremental decoding state (per-layer key/value cache).
  class Session {
   public:
    explicit Session(const ToyModel& model);

    /// Appends one token; the hook sees this position's layer outputs.
    /// Returns the logits for the appended position.
    Vector push(Token token, const LayerHook& hook = {});

    const std::vector<Vector>& last_layer_states() const noexcept { return last_states_; }
    std::size_t length() const noexcept { return length_; }

   private:
    const ToyModel* model_;
    std::vector<Matrix> keys_;
    std::vector<Matrix> values_;
    std::vector<Vector> last_states_;
    std::size_t length_ = 0;
  };

 private:
  struct Layout;
  explicit ToyModel(const ToyModelSpec& spec);

  std::span<const float> slice(std::size_t offset, std::size_t count) const {
    return std::span<const float>(weights_).subspan(offset, count);
  }

  ToyModelSpec spec_;
  std::vector<float> weights_;
};

ToyModel build_model(const ToyModelSpec& spec);

/// Full forward over `tokens`; the hook applies at the final position only.
ForwardResult forward_with_hooks(const ToyModel& model, std::span<const Token> tokens, const LayerHook& hook = {});

/// Additive drift planted into generation-time states at `layer`:
/// step t adds (t + 1) * rate * direction.
struct Drift {
  Vector direction;
  double rate = 0.0;
  std::size_t layer = 0;
};

/// Softmax sampling instead of greedy argmax.
struct Sampling {
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct GenerateOptions {
  std::optional<Drift> drift;
  std::optional<Sampling> sampling;
};

struct GenerationResult {
  std::vector<Token> tokens;  // newly generated, including a final EOS if emitted
  std::vector<StepTrace> traces;
};

/// Greedy decoding (ties to the lowest id) with steering applied through the
/// layer hook at every step. Stops at EOS, after `max_new` tokens, or when the
/// context is full.
GenerationResult generate(const ToyModel& model, std::span<const Token> prompt, const SteeringConfig& config,
                          const SteeringVectorSet* vectors, std::size_t max_new, const GenerateOptions& options = {});

/// Lowest index among the maxima.
Token argmax_token(std::span<const double> logits) noexcept;

}  // namespace revis
