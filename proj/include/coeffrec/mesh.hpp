#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace coeffrec {

/// A point of the unit interval or unit square. In 1D only x[0] is used and
/// x[1] stays 0.
using Point = std::array<double, 2>;

/// Vertex indices of a simplex. Intervals use the first two slots.
using Simplex = std::array<int, 3>;

/// Structured simplicial triangulation of (0,1) or (0,1)^2.
///
/// Nodes are ordered lexicographically by (x2, x1) grid index. In 2D every
/// grid cell is split along its lower-left to upper-right diagonal. Values
/// are immutable after construction.
class Mesh {
 public:
  int dim() const { return dim_; }
  /// Grid cells per side; the mesh is the uniform m-partition.
  int cells_per_side() const { return m_; }
  double h() const { return h_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_elements() const { return elements_.size(); }
  int vertices_per_element() const { return dim_ + 1; }

  const std::vector<Point>& nodes() const { return nodes_; }
  const Point& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Simplex>& elements() const { return elements_; }
  const Simplex& element(std::size_t k) const { return elements_[k]; }

  bool is_boundary(std::size_t i) const { return boundary_[i] != 0; }
  std::vector<int> boundary_nodes() const;

  double element_measure(std::size_t k) const { return measure_[k]; }
  /// Largest vertex-pair distance of element k.
  double element_diameter(std::size_t k) const;
  Point barycenter(std::size_t k) const;

  /// Element containing x and the barycentric coordinates of x in it.
  struct Location {
    std::size_t element;
    std::array<double, 3> bary;
  };
  Location locate(const Point& x) const;

  /// Index of the node at x, or -1 if no node sits there (within 1e-12).
  long find_node(const Point& x) const;

  friend Mesh unit_interval_mesh(int m);
  friend Mesh unit_square_mesh(int m);

 private:
  void finalize();

  int dim_ = 1;
  int m_ = 1;
  double h_ = 0.0;
  std::vector<Point> nodes_;
  std::vector<Simplex> elements_;
  std::vector<char> boundary_;
  std::vector<double> measure_;
};

Mesh unit_interval_mesh(int m);
Mesh unit_square_mesh(int m);

/// Uniform refinement: intervals split in two, triangles into four congruent
/// children by edge midpoints. Parent nodes keep their coordinates exactly.
Mesh refine_uniform(const Mesh& mesh);

/// Uniform subdivision of one element into 2^(d*level) similar sub-simplexes.
struct SubSimplexSet {
  std::size_t parent = 0;
  int level = 0;
  std::vector<std::array<Point, 3>> children;
  double child_measure = 0.0;
};

SubSimplexSet subdivide_element(const Mesh& mesh, std::size_t element, int level);

double simplex_measure(int dim, const std::array<Point, 3>& v);
double simplex_diameter(int dim, const std::array<Point, 3>& v);

/// Writes nodes.csv and elements.csv into dir.
void write_mesh_csv(const Mesh& mesh, const std::filesystem::path& dir);

}  // namespace coeffrec
