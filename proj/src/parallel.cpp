#include "hjb/parallel.hpp"

#include <cstdlib>
#include <string>

namespace hjb {

int default_workers() {
    if (const char* env = std::getenv("HJB_WORKERS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return omp_get_max_threads();
}

}  // namespace hjb
