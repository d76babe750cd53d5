#pragma once

#include <array>
#include <vector>

namespace splitfusion {

// Corner i sits at ((i>>0)&1, (i>>1)&1, (i>>2)&1) in the unit cell.
// Edge ids: axis*4 + rank of the lower corner among corners with that axis bit 0.
// Case tables are generated once by walking the isocontour loops over the cell
// faces; the 4-crossing face ambiguity is resolved by always separating the
// inside corners, which is face-local and therefore watertight across cells.
struct McTables {
  std::array<std::array<int, 2>, 12> edge_corners;           // edge -> (c0, c1)
  std::array<std::vector<std::array<int, 3>>, 256> cases;    // config -> edge triples

  // config bit i set means corner i is inside (value < 0); triangles are wound
  // so that their normals point toward the positive side.
};

const McTables& mc_tables();

}  // namespace splitfusion
