#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace msdtn {

using Index     = Eigen::Index;
using IndexList = std::vector<Index>;

/// Axis-aligned box. In 1D only the first coordinate is meaningful.
struct Box
{
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Zero();
};

/// Nonoverlapping n^dim partition of the unit interval/square.
///
/// Subdomains and coarse nodes are numbered lexicographically with the
/// x-index running fastest.
struct CoarsePartition
{
  int                             dim        = 1;
  int                             n_per_axis = 1;
  std::vector<Box>                subdomains;
  Eigen::MatrixXd                 coarse_nodes; // dim x N_coarse
  std::vector<bool>               coarse_on_boundary;
  std::vector<std::array<Index, 2>> skeleton_edges; // coarse node pairs

  Index num_subdomains() const { return static_cast<Index>(subdomains.size()); }
  Index num_coarse_nodes() const { return coarse_nodes.cols(); }
  Index num_interior_coarse_nodes() const;

  /// Coarse nodes of subdomain i in canonical local order:
  /// 1D [left, right], 2D counterclockwise from the lower-left corner.
  IndexList local_coarse_nodes(Index i) const;
};

CoarsePartition build_partition(int dim, int n_per_axis);

enum class VertexFlag : std::uint8_t
{
  Interior, // strictly inside one subdomain
  Skeleton, // on Gamma but not on the outer boundary
  Boundary  // on the outer boundary (also part of Gamma)
};

struct FineMesh
{
  int             dim                  = 1;
  int             n_per_axis           = 1; // subdomains per axis
  int             cells_per_subdomain  = 1; // fine cells per axis and subdomain
  Eigen::MatrixXd vertices;                 // dim x N
  Eigen::MatrixXi elements;                 // (dim+1) x E, counterclockwise in 2D
  std::vector<Index>      owner;            // element -> subdomain
  std::vector<VertexFlag> flags;
  std::vector<IndexList>  subdomain_elements;

  Index num_vertices() const { return vertices.cols(); }
  Index num_elements() const { return elements.cols(); }
  int   cells_per_axis() const { return n_per_axis * cells_per_subdomain; }
};

/// 1D: uniform grid. 2D: structured grid with every quad split along its
/// lower-left to upper-right diagonal. Vertices are ordered lexicographically.
FineMesh build_fine_mesh(const CoarsePartition &partition, int cells_per_subdomain);

void dump_mesh_csv(const FineMesh &mesh, std::ostream &vertices_out, std::ostream &elements_out);

enum class Region
{
  Closure,          // all vertices of the closed domain
  Interior,         // vertices not on the outer boundary
  Boundary,         // outer boundary
  Skeleton,         // union of subdomain boundaries
  SkeletonInterior, // skeleton minus outer boundary
  SubInterior,      // strictly inside subdomain i
  SubBoundary,      // boundary of subdomain i
  SubClosure        // closure of subdomain i
};

/// Ascending global vertex indices of a region. `sub` selects the subdomain
/// for the Sub* regions.
IndexList region_indices(const FineMesh &mesh, Region region, Index sub = -1);

/// Boolean restriction: row k of the matrix picks source entry indices()[k].
class Restriction
{
public:
  Restriction() = default;
  Restriction(Index source_size, IndexList indices);

  /// Restriction from `source` onto `target`, both given as global index
  /// lists. Every target index must appear in source.
  static Restriction between(const IndexList &target, const IndexList &source);

  Index            source_size() const { return source_size_; }
  Index            target_size() const { return static_cast<Index>(indices_.size()); }
  const IndexList &indices() const { return indices_; }

  Eigen::VectorXd restrict(const Eigen::Ref<const Eigen::VectorXd> &v) const;
  Eigen::VectorXd extend(const Eigen::Ref<const Eigen::VectorXd> &w) const;
  /// v += R^T w
  void extend_add(const Eigen::Ref<const Eigen::VectorXd> &w, Eigen::Ref<Eigen::VectorXd> v) const;

  Eigen::SparseMatrix<int> matrix() const;

private:
  Index     source_size_ = 0;
  IndexList indices_;
};

/// Index bookkeeping shared by the local and skeleton solvers.
struct SubdomainDofs
{
  IndexList   closure;  // global, ascending
  IndexList   interior; // global, ascending
  IndexList   boundary; // global, ascending
  Restriction interior_in_closure;
  Restriction boundary_in_closure;
  Restriction boundary_in_skeleton;
};

struct DofMap
{
  IndexList                  skeleton;          // global, ascending
  IndexList                  skeleton_interior; // positions within skeleton
  IndexList                  skeleton_fixed;    // positions within skeleton on the outer boundary
  std::vector<SubdomainDofs> subdomains;
};

DofMap build_dof_map(const FineMesh &mesh);

struct CoarseBasis
{
  Eigen::MatrixXd              phi;         // N_Gamma x N_coarse
  std::vector<Eigen::MatrixXd> local;       // N_{dOmega_i} x N_coarse_i
  std::vector<Restriction>     local_nodes; // coarse restriction in canonical order
};

CoarseBasis build_coarse_basis(const CoarsePartition &partition, const FineMesh &mesh, const DofMap &dofs);

} // namespace msdtn
