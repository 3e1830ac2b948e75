#include "aerossl/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aerossl {

ImageF to_float(const Image8& img) {
  ImageF out(img.width(), img.height());
  std::transform(img.data().begin(), img.data().end(), out.data().begin(),
                 [](std::uint8_t v) { return static_cast<float>(v); });
  return out;
}

Image8 to_u8(const ImageF& img) {
  Image8 out(img.width(), img.height());
  std::transform(img.data().begin(), img.data().end(), out.data().begin(), [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  });
  return out;
}

template <typename T>
BasicImage<T> crop(const BasicImage<T>& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width() || y + h > img.height()) {
    std::ostringstream msg;
    msg << "crop window (" << x << "," << y << "," << w << "x" << h << ") outside "
        << img.width() << "x" << img.height() << " image";
    throw std::out_of_range(msg.str());
  }
  BasicImage<T> out(w, h);
  const std::size_t row = static_cast<std::size_t>(w) * BasicImage<T>::kChannels;
  for (int r = 0; r < h; ++r) {
    const T* src = &img.at(x, y + r, 0);
    std::copy(src, src + row, &out.at(0, r, 0));
  }
  return out;
}

template Image8 crop(const Image8&, int, int, int, int);
template ImageF crop(const ImageF&, int, int, int, int);

}  // namespace aerossl
