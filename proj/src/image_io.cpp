// PNG/JPEG decode/encode for the dataset layer. The codec work is delegated
// to the imgcodecs library; everything downstream sees [H,W,3] float RGB in
// [0,1], row-major HWC.

#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "snn/data.hpp"

namespace snn {

Tensor decode_image_file(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);  // 8-bit BGR
  if (mat.empty())
    throw std::runtime_error("cannot decode image: " + path);
  const size_t h = static_cast<size_t>(mat.rows);
  const size_t w = static_cast<size_t>(mat.cols);
  Tensor out({h, w, 3});
  float* dst = out.data();
  constexpr float kInv = 1.0f / 255.0f;
  for (size_t r = 0; r < h; ++r) {
    const uint8_t* src = mat.ptr<uint8_t>(static_cast<int>(r));
    for (size_t c = 0; c < w; ++c) {
      dst[0] = static_cast<float>(src[2]) * kInv;  // R
      dst[1] = static_cast<float>(src[1]) * kInv;  // G
      dst[2] = static_cast<float>(src[0]) * kInv;  // B
      dst += 3;
      src += 3;
    }
  }
  return out;
}

void encode_png(const std::string& path, const Tensor& hwc) {
  if (hwc.rank() != 3 || hwc.dim(2) != 3)
    throw std::runtime_error("encode_png: image must be [H,W,3], got " +
                             shape_str(hwc.shape()));
  const int h = static_cast<int>(hwc.dim(0));
  const int w = static_cast<int>(hwc.dim(1));
  cv::Mat mat(h, w, CV_8UC3);
  const float* src = hwc.data();
  auto to_byte = [](float v) {
    const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<uint8_t>(std::lround(clamped * 255.0f));
  };
  for (int r = 0; r < h; ++r) {
    uint8_t* dst = mat.ptr<uint8_t>(r);
    for (int c = 0; c < w; ++c) {
      dst[0] = to_byte(src[2]);  // B
      dst[1] = to_byte(src[1]);  // G
      dst[2] = to_byte(src[0]);  // R
      dst += 3;
      src += 3;
    }
  }
  if (!cv::imwrite(path, mat))
    throw std::runtime_error("cannot write image: " + path);
}

}  // namespace snn
