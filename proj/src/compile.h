#pragma once

#include "expr.h"
#include "plan.h"

namespace tra {

// Structural translation of a TRA expression into the canonical initial IA
// plan:
//   Aggregate  -> AggLocal(groupByKeys) . Shuf(groupByKeys)
//   Join       -> JoinLocal(Bcast(left), right)
//   ReKey      -> MapLocal(keyFunc, idOp)
//   Filter     -> FilterLocal
//   Transform  -> MapLocal(idOp, transformFunc)
//   Tile       -> MapLocal(keyTileOp, arrayTileOp)
//   Concat     -> AggLocal(keyDim^c, arrayConcatOp) . Shuf(keyDim^c)
// Sources keep their catalog-declared initial partitioning; no Shuf is
// inserted for them. The catalog supplies source arities (needed for the
// complement dim lists); no optimization happens here.
IaPlan compile_expr(const KernelRegistry& reg, const TraExpr& expr, const Catalog& catalog,
                    const std::string& root_name = "out");

}  // namespace tra
