#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mmhs/features.hpp"
#include "mmhs/nn.hpp"

namespace mmhs {

struct PreprocessConfig {
  int height = 299;
  int width = 299;
  // RGB order. Defaults are the ImageNet statistics the usual vision
  // backbones were trained with.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

// Normalized RGB image in channel-major (C x H x W) layout.
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  // Throws ShapeMismatch if data.size() != 3*height*width, ConfigError if any
  // entry is not finite.
  ImageTensor(int height, int width, std::vector<float> data);
  static ImageTensor zeros(int height, int width);

  int channels() const noexcept { return kChannels; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  const std::vector<float>& data() const noexcept { return data_; }

 private:
  int height_;
  int width_;
  std::vector<float> data_;
};

// Decodes (PNG, JPEG and anything else the codec layer reads), converts to
// 3-channel RGB (grayscale replicated, alpha dropped), resizes to HxW,
// scales to [0,1] and normalizes per channel.
ImageTensor preprocess_image(const std::filesystem::path& image_path, const PreprocessConfig& config);

// Frozen feature extractor producing the backbone's native pooled vector.
class VisionBackbone {
 public:
  virtual ~VisionBackbone() = default;

  virtual std::string identity() const = 0;
  virtual Eigen::Index native_dim() const = 0;
  virtual int input_height() const = 0;
  virtual int input_width() const = 0;
  // Throws ShapeMismatch if the tensor does not match input_height/width.
  virtual Vector embed(const ImageTensor& tensor) const = 0;
};

// Deterministic stand-in for a pretrained CNN: the tensor is average-pooled
// to 3 x grid x grid, then mapped by a fixed affine map to native_dim.
// Entries of that map are hashed from (seed, coordinates):
//   W[r][c] = (2*u(seed, 1, r*in + c) - 1) / sqrt(in)
//   b[r]    =  2*u(seed, 2, r) - 1
// with u(seed, tag, i) = unit_from_bits(mix_seed(seed, (tag << 56) ^ i)).
class StubVisionBackbone final : public VisionBackbone {
 public:
  struct Options {
    std::uint64_t seed = 17;
    Eigen::Index native_dim = 2048;
    int grid = 16;
    int input_height = 299;
    int input_width = 299;
  };

  explicit StubVisionBackbone(const Options& options);

  std::string identity() const override;
  Eigen::Index native_dim() const override { return options_.native_dim; }
  int input_height() const override { return options_.input_height; }
  int input_width() const override { return options_.input_width; }
  Vector embed(const ImageTensor& tensor) const override;

  // Bin-averaged 3*grid*grid vector in (c, gy, gx) order.
  Vector pool(const ImageTensor& tensor) const;

 private:
  Options options_;
  Matrix body_weight_;
  Vector body_bias_;
};

// Backbone + trainable projection to 512 + ReLU, producing F1.
class VisionEncoder {
 public:
  VisionEncoder() = default;
  explicit VisionEncoder(std::shared_ptr<const VisionBackbone> backbone);

  const VisionBackbone& backbone() const { return *backbone_; }
  std::shared_ptr<const VisionBackbone> backbone_ptr() const { return backbone_; }

  Linear& projection() { return projection_; }
  const Linear& projection() const { return projection_; }

  // Sets the projection to [I | 0] (first 512 native coordinates), used by
  // regression fixtures.
  void set_identity_projection();

  VisionFeature encode(const ImageTensor& tensor) const;
  // native: native_dim x batch -> 512 x batch (post-ReLU).
  Matrix project(const Matrix& native) const;

 private:
  std::shared_ptr<const VisionBackbone> backbone_;
  Linear projection_;
};

VisionFeature encode_image(const ImageTensor& tensor, const VisionEncoder& encoder);

}  // namespace mmhs
