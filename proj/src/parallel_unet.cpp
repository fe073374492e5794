#include "tryon/parallel_unet.hpp"

namespace tryon {

template class TryOnUNet<float>;
template class TryOnUNet<double>;

}  // namespace tryon
