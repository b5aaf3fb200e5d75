// ONNX Runtime backed transformer encoder. Compiled only with
// -DPROMPTGUARD_WITH_ONNXRUNTIME=ON.

#include <onnxruntime_cxx_api.h>

#include <algorithm>
#include <array>
#include <string>

#include "promptguard/embedding.hpp"
#include "promptguard/error.hpp"

namespace promptguard {

namespace {

class OnnxEmbeddingProvider final : public EmbeddingProvider {
 public:
  OnnxEmbeddingProvider(const std::filesystem::path& model_file, TokenId pad_id, Pooling pooling)
      : env_(ORT_LOGGING_LEVEL_WARNING, "promptguard"), pad_id_(pad_id), pooling_(pooling) {
    if (!std::filesystem::exists(model_file)) {
      throw UsageError("cannot open model file: " + model_file.string());
    }
    Ort::SessionOptions options;
    options.SetGraphOptimizationLevel(GraphOptimizationLevel::ORT_ENABLE_ALL);
    try {
      session_ = std::make_unique<Ort::Session>(env_, model_file.c_str(), options);
    } catch (const Ort::Exception& e) {
      throw Error("failed to load model file " + model_file.string() + ": " + e.what());
    }

    Ort::AllocatorWithDefaultOptions alloc;
    for (std::size_t i = 0; i < session_->GetInputCount(); ++i) {
      const auto name = session_->GetInputNameAllocated(i, alloc);
      if (std::string_view(name.get()) == "token_type_ids") has_token_types_ = true;
    }
    output_name_ = session_->GetOutputNameAllocated(0, alloc).get();

    const auto shape = session_->GetOutputTypeInfo(0).GetTensorTypeAndShapeInfo().GetShape();
    if (shape.size() != 3 || shape[2] <= 0) {
      throw FormatError("model output 0 is not a [batch, seq, hidden] tensor with static hidden size");
    }
    dim_ = static_cast<std::size_t>(shape[2]);
  }

  ProviderKind kind() const override { return ProviderKind::kTransformerRuntime; }
  std::size_t dim() const override { return dim_; }

  EmbeddingMatrix embed_batch(std::span<const TokenSequence> sequences) const override {
    if (sequences.empty()) throw UsageError("embed_batch called with no sequences");
    std::size_t width = 0;
    for (const auto& s : sequences) width = std::max(width, s.size());

    const std::size_t batch = sequences.size();
    std::vector<std::int64_t> ids(batch * width, pad_id_);
    std::vector<std::int64_t> mask(batch * width, 0);
    std::vector<std::int64_t> types(batch * width, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& s = sequences[b];
      for (std::size_t t = 0; t < s.size(); ++t) {
        ids[b * width + t] = s.ids[t];
        mask[b * width + t] = s.attention_mask[t];
      }
    }

    const auto memory = Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault);
    const std::array<std::int64_t, 2> shape{static_cast<std::int64_t>(batch),
                                            static_cast<std::int64_t>(width)};
    std::vector<Ort::Value> inputs;
    std::vector<const char*> names{"input_ids", "attention_mask"};
    inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(memory, ids.data(), ids.size(),
                                                            shape.data(), shape.size()));
    inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(memory, mask.data(), mask.size(),
                                                            shape.data(), shape.size()));
    if (has_token_types_) {
      names.push_back("token_type_ids");
      inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(memory, types.data(), types.size(),
                                                              shape.data(), shape.size()));
    }
    const char* output = output_name_.c_str();

    std::vector<Ort::Value> outputs;
    try {
      outputs = session_->Run(Ort::RunOptions{nullptr}, names.data(), inputs.data(), inputs.size(),
                              &output, 1);
    } catch (const Ort::Exception& e) {
      throw Error(std::string("transformer inference failed: ") + e.what());
    }

    const auto out_shape = outputs[0].GetTensorTypeAndShapeInfo().GetShape();
    if (out_shape.size() != 3 || static_cast<std::size_t>(out_shape[0]) != batch ||
        static_cast<std::size_t>(out_shape[1]) != width ||
        static_cast<std::size_t>(out_shape[2]) != dim_) {
      throw NumericError("transformer output shape does not match the batch");
    }
    const float* hidden = outputs[0].GetTensorData<float>();

    EmbeddingMatrix result(batch, dim_);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::span<const float> block(hidden + b * width * dim_, width * dim_);
      std::vector<std::uint8_t> row_mask(width, 0);
      std::copy(sequences[b].attention_mask.begin(), sequences[b].attention_mask.end(),
                row_mask.begin());
      const auto pooled =
          pooling_ == Pooling::kMean ? mean_pool(block, row_mask, dim_) : cls_pool(block, dim_);
      std::copy(pooled.begin(), pooled.end(), result.row(b).begin());
    }
    return result;
  }

 private:
  Ort::Env env_;
  std::unique_ptr<Ort::Session> session_;
  std::string output_name_;
  TokenId pad_id_;
  Pooling pooling_;
  bool has_token_types_ = false;
  std::size_t dim_ = 0;
};

}  // namespace

std::unique_ptr<EmbeddingProvider> make_onnx_provider(const std::filesystem::path& model_file,
                                                      TokenId pad_id, Pooling pooling) {
  return std::make_unique<OnnxEmbeddingProvider>(model_file, pad_id, pooling);
}

}  // namespace promptguard
