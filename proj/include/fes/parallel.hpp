#ifndef FES_PARALLEL_HPP
#define FES_PARALLEL_HPP

#include "fes/types.hpp"

#include <functional>

namespace fes {

/// Run fn(0)..fn(n-1) across up to hardware_concurrency() worker threads.
/// Tasks must be independent and each index must write only its own outputs;
/// the first exception thrown by any task is rethrown on the caller.
void parallel_for(Index n, const std::function<void(Index)>& fn);

}  // namespace fes

#endif  // FES_PARALLEL_HPP
