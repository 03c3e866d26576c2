#include "demask/nn/face_renderer.hpp"

#include "demask/errors.hpp"

namespace demask {
namespace {

torch::Tensor to_tensor(const Eigen::MatrixXd& m, torch::Dtype dtype) {
  // Eigen is column-major; copy through a row-major buffer.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return torch::from_blob(rm.data(), {rm.rows(), rm.cols()}, torch::kFloat64).clone().to(dtype);
}

torch::Tensor to_tensor(const Eigen::VectorXd& v, torch::Dtype dtype) {
  return torch::from_blob(const_cast<double*>(v.data()), {v.size()}, torch::kFloat64).clone().to(dtype);
}

}  // namespace

torch::Tensor euler_xyz_batch(const torch::Tensor& angles) {
  const auto a = angles.select(1, 0);
  const auto b = angles.select(1, 1);
  const auto c = angles.select(1, 2);
  const auto one = torch::ones_like(a);
  const auto zero = torch::zeros_like(a);
  const auto ca = a.cos(), sa = a.sin();
  const auto cb = b.cos(), sb = b.sin();
  const auto cc = c.cos(), sc = c.sin();
  auto mat = [](std::initializer_list<torch::Tensor> rows) {
    return torch::stack(std::vector<torch::Tensor>(rows), 1).view({-1, 3, 3});
  };
  const auto rx = mat({one, zero, zero, zero, ca, -sa, zero, sa, ca});
  const auto ry = mat({cb, zero, sb, zero, one, zero, -sb, zero, cb});
  const auto rz = mat({cc, -sc, zero, sc, cc, zero, zero, zero, one});
  return rx.matmul(ry).matmul(rz);
}

TorchFaceModel::TorchFaceModel(const MorphableBasis& basis, const Camera& cam, torch::Dtype dtype)
    : basis_(basis), cam_(cam), layout_(basis.layout()), dtype_(dtype) {
  basis_.validate();
  cam_.validate();
  mean_shape_ = to_tensor(basis.mean_shape, dtype);
  shape_basis_ = to_tensor(basis.shape_basis, dtype);
  expr_basis_ = to_tensor(basis.expr_basis, dtype);
  mean_texture_ = to_tensor(basis.mean_texture, dtype);
  texture_basis_ = to_tensor(basis.texture_basis, dtype);
  std::vector<std::int64_t> tris;
  for (const Triangle& t : basis.triangles) {
    tris.insert(tris.end(), t.begin(), t.end());
  }
  triangles_ = torch::tensor(tris, torch::kInt64).view({-1, 3});
  std::vector<std::int64_t> lms(basis.landmark_indices.begin(), basis.landmark_indices.end());
  landmark_index_ = torch::tensor(lms, torch::kInt64);
}

torch::Tensor TorchFaceModel::project(const torch::Tensor& camera_vertices) const {
  const auto z = camera_vertices.select(2, 2).clamp_min(kMinDepth);
  const auto x = camera_vertices.select(2, 0) / z * cam_.focal + cam_.cx;
  const auto y = camera_vertices.select(2, 1) / z * cam_.focal + cam_.cy;
  return torch::stack({x, y}, 2);
}

TorchFaceModel::Posed TorchFaceModel::pose(const torch::Tensor& coeffs) const {
  if (coeffs.dim() != 2 || coeffs.size(1) != layout_.total()) {
    throw DimensionError("coefficients must be [B, " + std::to_string(layout_.total()) + "], got " +
                         c10::str(coeffs.sizes()));
  }
  const auto c = coeffs.to(dtype_);
  const std::int64_t batch = c.size(0);
  const int v = basis_.num_vertices();
  auto group = [&](CoeffGroup g) { return c.narrow(1, layout_.offset(g), layout_.dim(g)); };

  auto shape = mean_shape_.unsqueeze(0) + group(CoeffGroup::Shape).matmul(shape_basis_.t()) +
               group(CoeffGroup::Expression).matmul(expr_basis_.t());
  auto albedo = (mean_texture_.unsqueeze(0) + group(CoeffGroup::Texture).matmul(texture_basis_.t())).clamp(0.0, 1.0);
  const auto vertices = shape.view({batch, v, 3});

  const auto rot = euler_xyz_batch(group(CoeffGroup::Rotation));
  auto offset = group(CoeffGroup::Translation).clone();
  offset = offset + torch::tensor({0.0, 0.0, cam_.standoff}, offset.options()).unsqueeze(0);
  const auto camera_vertices = vertices.matmul(rot.transpose(1, 2)) + offset.unsqueeze(1);
  return {camera_vertices, project(camera_vertices), albedo.view({batch, v, 3})};
}

torch::Tensor TorchFaceModel::landmarks(const torch::Tensor& coeffs) const {
  const auto posed = pose(coeffs);
  return posed.xy.index_select(1, landmark_index_);
}

TorchFaceModel::Output TorchFaceModel::render(const torch::Tensor& coeffs) const {
  const Posed posed = pose(coeffs);
  const std::int64_t batch = posed.camera_vertices.size(0);
  const std::int64_t v = basis_.num_vertices();
  const int w = cam_.width;
  const int h = cam_.height;

  // vertex normals from area-weighted face normals
  const auto& cv = posed.camera_vertices;
  const auto v0 = cv.index_select(1, triangles_.select(1, 0));
  const auto v1 = cv.index_select(1, triangles_.select(1, 1));
  const auto v2 = cv.index_select(1, triangles_.select(1, 2));
  const auto face_n = torch::cross(v1 - v0, v2 - v0, 2);
  auto normals = torch::zeros_like(cv);
  for (int k = 0; k < 3; ++k) {
    normals = normals.index_add(1, triangles_.select(1, k), face_n);
  }
  normals = normals / normals.norm(2, 2, true).clamp_min(1e-12);

  const auto nx = normals.select(2, 0);
  const auto ny = normals.select(2, 1);
  const auto nz = normals.select(2, 2);
  const auto sh = torch::stack({torch::full_like(nx, 0.282094791773878), 0.488602511902920 * ny,
                                0.488602511902920 * nz, 0.488602511902920 * nx, 1.092548430592079 * nx * ny,
                                1.092548430592079 * ny * nz, 0.315391565252520 * (3.0 * nz * nz - 1.0),
                                1.092548430592079 * nx * nz, 0.546274215296040 * (nx * nx - ny * ny)},
                               2);  // [B,V,9]
  const auto gamma = coeffs.to(dtype_)
                         .narrow(1, layout_.offset(CoeffGroup::Illumination), kIlluminationDim)
                         .view({batch, 3, kShBands});
  const auto shaded = (posed.albedo * sh.matmul(gamma.transpose(1, 2))).clamp(0.0, 1.0);  // [B,V,3]

  // visibility on the CPU
  const auto xy_cpu = posed.xy.detach().to(torch::kFloat64).contiguous();
  const auto z_cpu = cv.select(2, 2).detach().clamp_min(kMinDepth).to(torch::kFloat64).contiguous();
  const VertexMatrix no_colour = VertexMatrix::Zero(v, 3);
  std::vector<std::int64_t> pixel_index;
  std::vector<std::int64_t> tri_index;
  std::vector<float> coverage(static_cast<std::size_t>(batch) * w * h, 0.0f);
  for (std::int64_t b = 0; b < batch; ++b) {
    const PointMatrix xy = Eigen::Map<const PointMatrix>(xy_cpu[b].data_ptr<double>(), v, 2);
    const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(z_cpu[b].data_ptr<double>(), v);
    const RenderedFace raster = rasterize(xy, z, basis_.triangles, no_colour, cam_);
    for (std::size_t p = 0; p < raster.triangle_id.size(); ++p) {
      if (raster.triangle_id[p] < 0) {
        continue;
      }
      const auto flat = b * w * h + static_cast<std::int64_t>(p);
      pixel_index.push_back(flat);
      tri_index.push_back(b * static_cast<std::int64_t>(basis_.triangles.size()) + raster.triangle_id[p]);
      coverage[static_cast<std::size_t>(flat)] = 1.0f;
    }
  }

  const auto opts = shaded.options();
  auto image = torch::zeros({batch * h * w, 3}, opts);
  if (!pixel_index.empty()) {
    const auto pix = torch::tensor(pixel_index, torch::kInt64);
    const auto tri_global = torch::tensor(tri_index, torch::kInt64);
    const auto tri_count = static_cast<std::int64_t>(basis_.triangles.size());
    const auto tri_batch = torch::div(tri_global, tri_count, "floor");
    const auto tri_local = tri_global - tri_batch * tri_count;
    const auto corners = triangles_.index_select(0, tri_local) + (tri_batch * v).unsqueeze(1);  // [P,3]
    const auto xy_flat = posed.xy.reshape({batch * v, 2});
    const auto col_flat = shaded.reshape({batch * v, 3});
    const auto p0 = xy_flat.index_select(0, corners.select(1, 0));
    const auto p1 = xy_flat.index_select(0, corners.select(1, 1));
    const auto p2 = xy_flat.index_select(0, corners.select(1, 2));
    const auto local = pix - torch::div(pix, w * h, "floor") * (w * h);
    const auto sx = (torch::remainder(local, w).to(dtype_) + 0.5);
    const auto sy = (torch::div(local, w, "floor").to(dtype_) + 0.5);
    auto edge = [](const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& px, const torch::Tensor& py) {
      return (b.select(1, 0) - a.select(1, 0)) * (py - a.select(1, 1)) -
             (b.select(1, 1) - a.select(1, 1)) * (px - a.select(1, 0));
    };
    const auto area = edge(p0, p1, p2.select(1, 0), p2.select(1, 1));
    const auto b0 = edge(p1, p2, sx, sy) / area;
    const auto b1 = edge(p2, p0, sx, sy) / area;
    const auto b2 = edge(p0, p1, sx, sy) / area;
    const auto colour = b0.unsqueeze(1) * col_flat.index_select(0, corners.select(1, 0)) +
                        b1.unsqueeze(1) * col_flat.index_select(0, corners.select(1, 1)) +
                        b2.unsqueeze(1) * col_flat.index_select(0, corners.select(1, 2));
    image = image.index_copy(0, pix, colour);
  }
  Output out;
  out.image = image.view({batch, h, w, 3}).permute({0, 3, 1, 2}).contiguous();
  out.coverage = torch::from_blob(coverage.data(), {batch, 1, h, w}, torch::kFloat32).clone().to(dtype_);
  out.landmarks = posed.xy.index_select(1, landmark_index_);
  return out;
}

torch::Tensor image_to_tensor(const Image& image) {
  auto t = torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width, image.channels},
                            torch::kFloat32);
  return t.permute({2, 0, 1}).clone();
}

Image tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3) {
    throw DimensionError("expected a [C,H,W] tensor, got " + c10::str(chw.sizes()));
  }
  const auto hwc = chw.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  Image out(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)), static_cast<int>(chw.size(0)));
  std::memcpy(out.data.data(), hwc.data_ptr<float>(), out.data.size() * sizeof(float));
  return out;
}

torch::Tensor stack_images(const std::vector<const Image*>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const Image* img : images) {
    ts.push_back(image_to_tensor(*img));
  }
  return torch::stack(ts);
}

}  // namespace demask
