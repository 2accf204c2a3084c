#include "msdtn/mesh.hpp"
#include "msdtn/errors.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>
#include <unordered_map>

namespace msdtn {

namespace {

struct Lattice
{
  int   dim;
  Index n; // vertices per axis minus one
  Index m; // cells per subdomain

  Index vertex(Index ix, Index iy) const { return dim == 1 ? ix : iy * (n + 1) + ix; }
  Index ix(Index v) const { return dim == 1 ? v : v % (n + 1); }
  Index iy(Index v) const { return dim == 1 ? 0 : v / (n + 1); }
  Index count() const { return dim == 1 ? n + 1 : (n + 1) * (n + 1); }
};

Lattice lattice_of(const FineMesh &mesh)
{
  return {mesh.dim, mesh.cells_per_axis(), mesh.cells_per_subdomain};
}

} // namespace

Index CoarsePartition::num_interior_coarse_nodes() const
{
  return std::count(coarse_on_boundary.begin(), coarse_on_boundary.end(), false);
}

IndexList CoarsePartition::local_coarse_nodes(Index i) const
{
  const Index n = n_per_axis;
  if (dim == 1) {
    return {i, i + 1};
  }
  const Index I = i % n, J = i / n;
  auto node = [n](Index a, Index b) { return b * (n + 1) + a; };
  return {node(I, J), node(I + 1, J), node(I + 1, J + 1), node(I, J + 1)};
}

CoarsePartition build_partition(int dim, int n_per_axis)
{
  if (dim != 1 && dim != 2) {
    throw ConfigError("partition dimension must be 1 or 2, got " + std::to_string(dim));
  }
  if (n_per_axis < 1) {
    throw ConfigError("need at least one subdomain per axis");
  }
  CoarsePartition p;
  p.dim        = dim;
  p.n_per_axis = n_per_axis;
  const Index  n = n_per_axis;
  const double H = 1.0 / static_cast<double>(n);

  if (dim == 1) {
    for (Index I = 0; I < n; ++I) {
      Box b;
      b.lo.x() = I * H;
      b.hi.x() = (I + 1 == n) ? 1.0 : (I + 1) * H;
      p.subdomains.push_back(b);
    }
    p.coarse_nodes.resize(1, n + 1);
    for (Index I = 0; I <= n; ++I) {
      p.coarse_nodes(0, I) = (I == n) ? 1.0 : I * H;
      p.coarse_on_boundary.push_back(I == 0 || I == n);
    }
    return p;
  }

  auto coord = [&](Index a) { return a == n ? 1.0 : a * H; };
  for (Index J = 0; J < n; ++J) {
    for (Index I = 0; I < n; ++I) {
      Box b;
      b.lo = {coord(I), coord(J)};
      b.hi = {coord(I + 1), coord(J + 1)};
      p.subdomains.push_back(b);
    }
  }
  p.coarse_nodes.resize(2, (n + 1) * (n + 1));
  for (Index J = 0; J <= n; ++J) {
    for (Index I = 0; I <= n; ++I) {
      const Index a       = J * (n + 1) + I;
      p.coarse_nodes(0, a) = coord(I);
      p.coarse_nodes(1, a) = coord(J);
      p.coarse_on_boundary.push_back(I == 0 || I == n || J == 0 || J == n);
    }
  }
  for (Index J = 0; J <= n; ++J) {
    for (Index I = 0; I < n; ++I) {
      p.skeleton_edges.push_back({J * (n + 1) + I, J * (n + 1) + I + 1});
    }
  }
  for (Index I = 0; I <= n; ++I) {
    for (Index J = 0; J < n; ++J) {
      p.skeleton_edges.push_back({J * (n + 1) + I, (J + 1) * (n + 1) + I});
    }
  }
  return p;
}

FineMesh build_fine_mesh(const CoarsePartition &partition, int cells_per_subdomain)
{
  if (cells_per_subdomain < 1) {
    throw ConfigError("need at least one fine cell per subdomain");
  }
  FineMesh mesh;
  mesh.dim                 = partition.dim;
  mesh.n_per_axis          = partition.n_per_axis;
  mesh.cells_per_subdomain = cells_per_subdomain;
  const Lattice L          = lattice_of(mesh);
  const Index   n          = L.n;
  const Index   m          = L.m;
  const Index   nsub       = partition.n_per_axis;
  auto          coord      = [n](Index a) { return a == n ? 1.0 : static_cast<double>(a) / static_cast<double>(n); };

  mesh.subdomain_elements.resize(partition.num_subdomains());
  if (mesh.dim == 1) {
    mesh.vertices.resize(1, n + 1);
    for (Index ix = 0; ix <= n; ++ix) {
      mesh.vertices(0, ix) = coord(ix);
      const bool on_skel   = ix % m == 0;
      mesh.flags.push_back((ix == 0 || ix == n) ? VertexFlag::Boundary
                           : on_skel            ? VertexFlag::Skeleton
                                                : VertexFlag::Interior);
    }
    mesh.elements.resize(2, n);
    for (Index e = 0; e < n; ++e) {
      mesh.elements(0, e) = static_cast<int>(e);
      mesh.elements(1, e) = static_cast<int>(e + 1);
      mesh.owner.push_back(e / m);
      mesh.subdomain_elements[e / m].push_back(e);
    }
    return mesh;
  }

  mesh.vertices.resize(2, L.count());
  for (Index iy = 0; iy <= n; ++iy) {
    for (Index ix = 0; ix <= n; ++ix) {
      const Index v      = L.vertex(ix, iy);
      mesh.vertices(0, v) = coord(ix);
      mesh.vertices(1, v) = coord(iy);
      const bool boundary = ix == 0 || ix == n || iy == 0 || iy == n;
      const bool on_skel  = ix % m == 0 || iy % m == 0;
      mesh.flags.push_back(boundary ? VertexFlag::Boundary
                           : on_skel ? VertexFlag::Skeleton
                                     : VertexFlag::Interior);
    }
  }
  mesh.elements.resize(3, 2 * n * n);
  Index e = 0;
  for (Index cy = 0; cy < n; ++cy) {
    for (Index cx = 0; cx < n; ++cx) {
      const int   v00 = static_cast<int>(L.vertex(cx, cy));
      const int   v10 = static_cast<int>(L.vertex(cx + 1, cy));
      const int   v01 = static_cast<int>(L.vertex(cx, cy + 1));
      const int   v11 = static_cast<int>(L.vertex(cx + 1, cy + 1));
      const Index sub = (cy / m) * nsub + cx / m;
      mesh.elements.col(e) << v00, v10, v11;
      mesh.owner.push_back(sub);
      mesh.subdomain_elements[sub].push_back(e++);
      mesh.elements.col(e) << v00, v11, v01;
      mesh.owner.push_back(sub);
      mesh.subdomain_elements[sub].push_back(e++);
    }
  }
  return mesh;
}

void dump_mesh_csv(const FineMesh &mesh, std::ostream &vout, std::ostream &eout)
{
  vout << "index,x,y,flag\n";
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const double y    = mesh.dim == 2 ? mesh.vertices(1, v) : 0.0;
    const char  *flag = mesh.flags[v] == VertexFlag::Interior   ? "interior"
                        : mesh.flags[v] == VertexFlag::Skeleton ? "skeleton"
                                                                : "boundary";
    vout << v << ',' << mesh.vertices(0, v) << ',' << y << ',' << flag << '\n';
  }
  eout << (mesh.dim == 1 ? "index,v0,v1,subdomain\n" : "index,v0,v1,v2,subdomain\n");
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    eout << e;
    for (Index k = 0; k < mesh.elements.rows(); ++k) {
      eout << ',' << mesh.elements(k, e);
    }
    eout << ',' << mesh.owner[e] << '\n';
  }
}

IndexList region_indices(const FineMesh &mesh, Region region, Index sub)
{
  const Lattice L = lattice_of(mesh);
  const Index   m = L.m;
  IndexList     out;

  const bool per_sub = region == Region::SubInterior || region == Region::SubBoundary || region == Region::SubClosure;
  if (per_sub) {
    const Index nsub = mesh.n_per_axis;
    const Index total = mesh.dim == 1 ? nsub : nsub * nsub;
    if (sub < 0 || sub >= total) {
      throw ConfigError("subdomain index out of range");
    }
    const Index I = sub % nsub, J = mesh.dim == 1 ? 0 : sub / nsub;
    const Index x0 = I * m, x1 = (I + 1) * m;
    const Index y0 = J * m, y1 = (J + 1) * m;
    const Index ylo = mesh.dim == 1 ? 0 : y0, yhi = mesh.dim == 1 ? 0 : y1;
    for (Index iy = ylo; iy <= yhi; ++iy) {
      for (Index ix = x0; ix <= x1; ++ix) {
        const bool on_bdry = ix == x0 || ix == x1 || (mesh.dim == 2 && (iy == y0 || iy == y1));
        if (region == Region::SubClosure || (region == Region::SubBoundary) == on_bdry) {
          out.push_back(L.vertex(ix, iy));
        }
      }
    }
    return out;
  }

  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const VertexFlag f = mesh.flags[v];
    bool             keep = false;
    switch (region) {
    case Region::Closure: keep = true; break;
    case Region::Interior: keep = f != VertexFlag::Boundary; break;
    case Region::Boundary: keep = f == VertexFlag::Boundary; break;
    case Region::Skeleton: keep = f != VertexFlag::Interior; break;
    case Region::SkeletonInterior: keep = f == VertexFlag::Skeleton; break;
    default: break;
    }
    if (keep) out.push_back(v);
  }
  return out;
}

Restriction::Restriction(Index source_size, IndexList indices)
  : source_size_(source_size), indices_(std::move(indices))
{
  std::vector<bool> seen(static_cast<size_t>(source_size_), false);
  for (Index j : indices_) {
    if (j < 0 || j >= source_size_ || seen[j]) {
      throw Error("restriction indices must be distinct and within the source range");
    }
    seen[j] = true;
  }
}

Restriction Restriction::between(const IndexList &target, const IndexList &source)
{
  std::unordered_map<Index, Index> position;
  position.reserve(source.size());
  for (size_t k = 0; k < source.size(); ++k) {
    position.emplace(source[k], static_cast<Index>(k));
  }
  IndexList idx;
  idx.reserve(target.size());
  for (Index t : target) {
    auto it = position.find(t);
    if (it == position.end()) {
      throw Error("restriction target is not a subset of its source");
    }
    idx.push_back(it->second);
  }
  return Restriction(static_cast<Index>(source.size()), std::move(idx));
}

Eigen::VectorXd Restriction::restrict(const Eigen::Ref<const Eigen::VectorXd> &v) const
{
  assert(v.size() == source_size_);
  return v(indices_);
}

Eigen::VectorXd Restriction::extend(const Eigen::Ref<const Eigen::VectorXd> &w) const
{
  Eigen::VectorXd v = Eigen::VectorXd::Zero(source_size_);
  extend_add(w, v);
  return v;
}

void Restriction::extend_add(const Eigen::Ref<const Eigen::VectorXd> &w, Eigen::Ref<Eigen::VectorXd> v) const
{
  assert(w.size() == target_size());
  for (Index k = 0; k < target_size(); ++k) {
    v[indices_[k]] += w[k];
  }
}

Eigen::SparseMatrix<int> Restriction::matrix() const
{
  std::vector<Eigen::Triplet<int>> t;
  t.reserve(indices_.size());
  for (Index k = 0; k < target_size(); ++k) {
    t.emplace_back(k, indices_[k], 1);
  }
  Eigen::SparseMatrix<int> R(target_size(), source_size_);
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

DofMap build_dof_map(const FineMesh &mesh)
{
  DofMap map;
  map.skeleton = region_indices(mesh, Region::Skeleton);
  for (size_t k = 0; k < map.skeleton.size(); ++k) {
    const bool fixed = mesh.flags[map.skeleton[k]] == VertexFlag::Boundary;
    (fixed ? map.skeleton_fixed : map.skeleton_interior).push_back(static_cast<Index>(k));
  }
  const Index nsub = static_cast<Index>(mesh.subdomain_elements.size());
  for (Index i = 0; i < nsub; ++i) {
    SubdomainDofs s;
    s.closure              = region_indices(mesh, Region::SubClosure, i);
    s.interior             = region_indices(mesh, Region::SubInterior, i);
    s.boundary             = region_indices(mesh, Region::SubBoundary, i);
    s.interior_in_closure  = Restriction::between(s.interior, s.closure);
    s.boundary_in_closure  = Restriction::between(s.boundary, s.closure);
    s.boundary_in_skeleton = Restriction::between(s.boundary, map.skeleton);
    map.subdomains.push_back(std::move(s));
  }
  return map;
}

CoarseBasis build_coarse_basis(const CoarsePartition &partition, const FineMesh &mesh, const DofMap &dofs)
{
  const Lattice L     = lattice_of(mesh);
  const Index   m     = L.m;
  const Index   nc    = partition.n_per_axis + 1; // coarse nodes per axis
  const Index   ngam  = static_cast<Index>(dofs.skeleton.size());
  CoarseBasis   basis;
  basis.phi = Eigen::MatrixXd::Zero(ngam, partition.num_coarse_nodes());

  for (Index r = 0; r < ngam; ++r) {
    const Index v  = dofs.skeleton[r];
    const Index ix = L.ix(v), iy = L.iy(v);
    if (mesh.dim == 1) {
      basis.phi(r, ix / m) = 1.0;
      continue;
    }
    const Index  I = ix / m, J = iy / m;
    const double tx = static_cast<double>(ix % m) / static_cast<double>(m);
    const double ty = static_cast<double>(iy % m) / static_cast<double>(m);
    auto         node = [nc](Index a, Index b) { return b * nc + a; };
    if (ix % m == 0 && iy % m == 0) {
      basis.phi(r, node(I, J)) = 1.0;
    } else if (ix % m == 0) { // vertical coarse edge
      basis.phi(r, node(I, J))     = 1.0 - ty;
      basis.phi(r, node(I, J + 1)) = ty;
    } else { // horizontal coarse edge
      basis.phi(r, node(I, J))     = 1.0 - tx;
      basis.phi(r, node(I + 1, J)) = tx;
    }
  }

  for (Index i = 0; i < partition.num_subdomains(); ++i) {
    IndexList nodes = partition.local_coarse_nodes(i);
    basis.local.push_back(basis.phi(dofs.subdomains[i].boundary_in_skeleton.indices(), nodes));
    basis.local_nodes.emplace_back(partition.num_coarse_nodes(), std::move(nodes));
  }
  return basis;
}

} // namespace msdtn
