#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aerossl {

/// Interleaved 3-channel image, row-major (y, x, c).
template <typename T>
class BasicImage {
 public:
  static constexpr int kChannels = 3;

  BasicImage() = default;
  BasicImage(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height * kChannels, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const BasicImage& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image8 = BasicImage<std::uint8_t>;
using ImageF = BasicImage<float>;

ImageF to_float(const Image8& img);
/// Rounds and clamps to [0, 255].
Image8 to_u8(const ImageF& img);

/// Copies the w x h window at (x, y). Throws std::out_of_range if it leaves the image.
template <typename T>
BasicImage<T> crop(const BasicImage<T>& img, int x, int y, int w, int h);

template <typename T>
BasicImage<T> center_crop(const BasicImage<T>& img, int size) {
  return crop(img, (img.width() - size) / 2, (img.height() - size) / 2, size, size);
}

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

}  // namespace aerossl
