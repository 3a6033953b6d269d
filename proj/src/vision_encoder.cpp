#include "mmhs/vision_encoder.hpp"

#include <cmath>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mmhs/error.hpp"
#include "mmhs/rng.hpp"

namespace mmhs {

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height <= 0 || width <= 0 ||
      data_.size() != static_cast<std::size_t>(kChannels) * height * width) {
    throw Error(Errc::kShapeMismatch,
                fmt::format("image tensor {}x{}x{} with {} values", kChannels, height, width, data_.size()));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw Error(Errc::kConfigError, "image tensor has non-finite values");
  }
}

ImageTensor ImageTensor::zeros(int height, int width) {
  return ImageTensor(height, width, std::vector<float>(static_cast<std::size_t>(kChannels) * height * width, 0.0f));
}

ImageTensor preprocess_image(const std::filesystem::path& image_path, const PreprocessConfig& config) {
  if (config.height <= 0 || config.width <= 0) throw Error(Errc::kConfigError, "preprocess size must be positive");
  for (double s : config.stddev) {
    if (!(s > 0.0)) throw Error(Errc::kConfigError, "preprocess stddev must be positive");
  }

  cv::Mat raw;
  try {
    raw = cv::imread(image_path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    raw.release();
  }
  if (raw.empty()) throw Error(Errc::kUnreadableImage, image_path.string());

  double scale = 0.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default:
      throw Error(Errc::kUnsupportedColorSpace, fmt::format("{}: pixel depth {}", image_path.string(), raw.depth()));
  }

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default:
      throw Error(Errc::kUnsupportedColorSpace,
                  fmt::format("{}: {} channels", image_path.string(), raw.channels()));
  }

  cv::Mat resized;
  if (rgb.rows == config.height && rgb.cols == config.width) {
    resized = rgb;
  } else {
    const bool shrinking = rgb.rows > config.height || rgb.cols > config.width;
    cv::resize(rgb, resized, cv::Size(config.width, config.height), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }

  std::vector<float> data(static_cast<std::size_t>(3) * config.height * config.width);
  const std::size_t plane = static_cast<std::size_t>(config.height) * config.width;
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = resized.depth() == CV_8U ? resized.at<cv::Vec3b>(y, x)[c]
                                                  : resized.at<cv::Vec3w>(y, x)[c];
        data[c * plane + static_cast<std::size_t>(y) * config.width + x] =
            static_cast<float>((v * scale - config.mean[c]) / config.stddev[c]);
      }
    }
  }
  return ImageTensor(config.height, config.width, std::move(data));
}

namespace {

double hashed_unit(std::uint64_t seed, std::uint64_t tag, std::uint64_t i) {
  return unit_from_bits(mix_seed(seed, (tag << 56) ^ i));
}

}  // namespace

StubVisionBackbone::StubVisionBackbone(const Options& options) : options_(options) {
  if (options.native_dim < kBranchDim || options.grid <= 0 || options.input_height < options.grid ||
      options.input_width < options.grid) {
    throw Error(Errc::kConfigError, "invalid stub vision backbone options");
  }
  const Eigen::Index in = 3 * static_cast<Eigen::Index>(options.grid) * options.grid;
  const double inv_sqrt_in = 1.0 / std::sqrt(static_cast<double>(in));
  body_weight_.resize(options.native_dim, in);
  for (Eigen::Index r = 0; r < options.native_dim; ++r) {
    for (Eigen::Index c = 0; c < in; ++c) {
      body_weight_(r, c) =
          (2.0 * hashed_unit(options.seed, 1, static_cast<std::uint64_t>(r * in + c)) - 1.0) * inv_sqrt_in;
    }
  }
  body_bias_.resize(options.native_dim);
  for (Eigen::Index r = 0; r < options.native_dim; ++r) {
    body_bias_(r) = 2.0 * hashed_unit(options.seed, 2, static_cast<std::uint64_t>(r)) - 1.0;
  }
}

std::string StubVisionBackbone::identity() const {
  return fmt::format("stub-vision/seed={}/native={}/grid={}/input={}x{}", options_.seed, options_.native_dim,
                     options_.grid, options_.input_height, options_.input_width);
}

Vector StubVisionBackbone::pool(const ImageTensor& tensor) const {
  const int g = options_.grid;
  const int h = tensor.height();
  const int w = tensor.width();
  Vector out(3 * g * g);
  for (int c = 0; c < 3; ++c) {
    for (int gy = 0; gy < g; ++gy) {
      const int y0 = gy * h / g;
      const int y1 = (gy + 1) * h / g;
      for (int gx = 0; gx < g; ++gx) {
        const int x0 = gx * w / g;
        const int x1 = (gx + 1) * w / g;
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += tensor.at(c, y, x);
        }
        out((c * g + gy) * g + gx) = sum / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

Vector StubVisionBackbone::embed(const ImageTensor& tensor) const {
  if (tensor.height() != options_.input_height || tensor.width() != options_.input_width) {
    throw Error(Errc::kShapeMismatch, fmt::format("backbone expects 3x{}x{}, got 3x{}x{}", options_.input_height,
                                                  options_.input_width, tensor.height(), tensor.width()));
  }
  return body_weight_ * pool(tensor) + body_bias_;
}

VisionEncoder::VisionEncoder(std::shared_ptr<const VisionBackbone> backbone)
    : backbone_(std::move(backbone)), projection_("vision.projection", backbone_->native_dim(), kBranchDim) {}

void VisionEncoder::set_identity_projection() {
  projection_.weight().value.setZero();
  for (Eigen::Index i = 0; i < kBranchDim; ++i) projection_.weight().value(i, i) = 1.0;
  projection_.bias().value.setZero();
}

Matrix VisionEncoder::project(const Matrix& native) const {
  if (native.rows() != backbone_->native_dim()) {
    throw Error(Errc::kShapeMismatch, fmt::format("native vision feature has {} rows, expected {}", native.rows(),
                                                  backbone_->native_dim()));
  }
  return relu(projection_.forward(native));
}

VisionFeature VisionEncoder::encode(const ImageTensor& tensor) const {
  return VisionFeature(BranchRole::kVision, project(backbone_->embed(tensor)).col(0));
}

VisionFeature encode_image(const ImageTensor& tensor, const VisionEncoder& encoder) {
  return encoder.encode(tensor);
}

}  // namespace mmhs
