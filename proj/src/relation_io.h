#pragma once

#include <iosfwd>
#include <string>

#include "expr.h"
#include "physical.h"
#include "types.h"

namespace tra {

// Relation files: a UTF-8 key/value header followed by binary tuples in
// canonical key order; keys as little-endian u64, values as little-endian
// doubles, row-major. Physical dumps add a site column and order tuples by
// (site, key). Round-trips are bit-exact.

void write_relation(std::ostream& os, const TensorRelation& rel);
TensorRelation read_relation(std::istream& is);
void save_relation(const std::string& path, const TensorRelation& rel);
TensorRelation load_relation(const std::string& path);

void write_physical(std::ostream& os, const PhysRelation& rel);
PhysRelation read_physical(std::istream& is);
void save_physical(const std::string& path, const PhysRelation& rel);

// Little-endian primitives shared with the process-mode wire protocol.
void put_u64(std::string& buf, uint64_t v);
void put_f64(std::string& buf, double v);
uint64_t get_u64(const char* p);
double get_f64(const char* p);

// Catalog files: JSON mapping source names to either relation files,
// seeded generators, or shape-only entries, each with a declared layout.
Catalog load_catalog(const std::string& path, const KernelRegistry& reg);
PartitionSpec layout_from_string(const std::string& s);
std::string layout_to_string(const PartitionSpec& p);

}  // namespace tra
