/* Build a 1D P5 hierarchy, solve with IR and a d-d-s-s V-cycle.
 *
 *   cargo build --release -p mgmp-ffi
 *   cc crates/ffi/examples/solve.c -Icrates/ffi/include \
 *      target/release/libmgmp_ffi.a -lpthread -ldl -lm -o solve
 */
#include <stdio.h>
#include <stdlib.h>

#include "mgmp.h"

static int check(MgmpStatus st) {
    if (st != MGMP_STATUS_OK) {
        char msg[512];
        mgmp_last_error_message(msg, sizeof msg);
        fprintf(stderr, "error %d: %s\n", (int)st, msg);
        exit(1);
    }
    return 0;
}

int main(void) {
    MgmpHierarchy *h = NULL;
    check(mgmp_hierarchy_build_fem1d(5, 5, 6, true, &h));
    size_t levels = 0, n = 0;
    check(mgmp_hierarchy_num_levels(h, &levels));
    check(mgmp_hierarchy_level_dim(h, levels - 1, &n));

    double *b = malloc(n * sizeof *b);
    double *x = malloc(n * sizeof *x);
    check(mgmp_hierarchy_rhs(h, b, n));

    MgmpSolver *s = NULL;
    check(mgmp_solver_new(h, "d-d-s-s", MGMP_SMOOTHER_IC0, 0.0, false, &s));
    MgmpSolveSummary sum;
    check(mgmp_solver_ir(s, b, x, n, "relres:1e-8", 200, &sum));
    printf("n = %zu, iterations = %zu, converged = %d, rel. residual = %.3e\n",
           n, sum.iterations, (int)sum.converged, sum.final_rel_residual);

    mgmp_solver_free(s);
    mgmp_hierarchy_free(h);
    free(b);
    free(x);
    return sum.converged ? 0 : 2;
}
