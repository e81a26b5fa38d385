/*
 * Freestanding QP runtime: LDL^T refactorization and substitution plus the
 * fixed-step ADMM iteration, shared by every generated solver bundle.
 *
 * C99, no heap allocation, no variable-length arrays, no standard-library
 * calls.  All divisions happen inside qpg_ldl_refactor, which stores the
 * reciprocal diagonal; every hot-path routine multiplies instead.
 *
 * The workspace is a single static instance owned by the generated bundle;
 * nothing here is re-entrant or thread-safe by design.
 */
#ifndef QPGEN_RUNTIME_H
#define QPGEN_RUNTIME_H

#include <stdint.h>

/* The bundle-local configuration header pins the float width for every
 * translation unit, including this runtime. */
#include "qpgen_conf.h"

#ifndef QPG_FLOAT
#define QPG_FLOAT double
#endif

typedef QPG_FLOAT qpg_float;
typedef int32_t qpg_int;

/* Infinite bounds travel as this sentinel; compare, never do arithmetic
 * that depends on overflow. */
#define QPG_INF ((qpg_float)1e30)

/* status codes returned by qpg_admm */
#define QPG_SOLVED 0
#define QPG_MAX_ITER 1
#define QPG_PRIMAL_INFEASIBLE 2
#define QPG_DUAL_INFEASIBLE 3

typedef struct {
    qpg_float rho;
    qpg_float rho_inv;         /* precomputed 1/rho: the loop never divides */
    qpg_float sigma;
    qpg_float alpha;
    qpg_float eps_abs;
    qpg_float eps_rel;
    qpg_float eps_pinf;
    qpg_float eps_dinf;
    qpg_int max_iter;
    qpg_int check_interval;
} qpg_settings;

typedef struct {
    qpg_int n;                 /* decision variables */
    qpg_int m;                 /* constraint rows */
    qpg_int nk;                /* n + m */

    /* problem data (values alias the canonical parameter vector) */
    const qpg_int *Pp;         /* P upper triangle, CSC */
    const qpg_int *Pi;
    const qpg_float *Px;
    const qpg_int *Ap;         /* A, CSC */
    const qpg_int *Ai;
    const qpg_float *Ax;
    const qpg_float *q;
    const qpg_float *l;
    const qpg_float *u;

    /* KKT matrix: permuted upper-triangular pattern, assembled values */
    const qpg_int *Kp;
    const qpg_int *Ki;
    qpg_float *Kx;
    const qpg_int *perm;       /* perm[k] = original index of k-th pivot */

    /* symbolic factorization (fixed) and numeric factors (rewritten) */
    const qpg_int *parent;
    const qpg_int *Lnz;
    const qpg_int *Lp;
    qpg_int *Li;
    qpg_float *Lx;
    qpg_float *D;
    qpg_float *Dinv;

    /* numeric-factorization scratch, each of length nk */
    qpg_float *yvals;
    qpg_int *ymark;
    qpg_int *yidx;
    qpg_int *elim;
    qpg_int *nextcol;

    /* iterates (persist across solves: warm starting) */
    qpg_float *x;              /* length n */
    qpg_float *y;              /* length m */
    qpg_float *z;              /* length m */

    /* iteration scratch */
    qpg_float *rhs;            /* length nk */
    qpg_float *work;           /* length nk */
    qpg_float *ax;             /* length m */
    qpg_float *px;             /* length n */
    qpg_float *aty;            /* length n */

    qpg_int iterations;        /* iterations consumed by the last solve */
    qpg_float pri_res;         /* residuals at termination of the last solve */
    qpg_float dua_res;
} qpg_workspace;

/* Numeric LDL^T of the assembled Kx on the fixed symbolic structure.
 * Returns the number of positive pivots (the caller checks it equals n),
 * or -1 on a zero pivot. */
qpg_int qpg_ldl_refactor(qpg_workspace *w);

/* Run the splitting iteration from the current iterates; returns a status
 * code and stores iteration count and residuals in the workspace. */
int qpg_admm(qpg_workspace *w, const qpg_settings *s);

#endif /* QPGEN_RUNTIME_H */
