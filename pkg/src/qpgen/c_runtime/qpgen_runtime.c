/*
 * Freestanding QP runtime implementation.  See qpgen_runtime.h for the
 * contracts.  The iteration mirrors the reference solver exactly, down to
 * loop order, so that generated solvers reproduce reference trajectories.
 */
#include "qpgen_runtime.h"

static qpg_float qpg_abs(qpg_float v)
{
    return v < (qpg_float)0.0 ? -v : v;
}

static qpg_float qpg_max(qpg_float a, qpg_float b)
{
    return a > b ? a : b;
}

qpg_int qpg_ldl_refactor(qpg_workspace *w)
{
    const qpg_int n = w->nk;
    const qpg_int *Ap = w->Kp;
    const qpg_int *Ai = w->Ki;
    const qpg_float *Ax = w->Kx;
    const qpg_int *parent = w->parent;
    const qpg_int *Lp = w->Lp;
    qpg_int *Li = w->Li;
    qpg_float *Lx = w->Lx;
    qpg_float *D = w->D;
    qpg_float *Dinv = w->Dinv;
    qpg_float *yvals = w->yvals;
    qpg_int *ymark = w->ymark;
    qpg_int *yidx = w->yidx;
    qpg_int *elim = w->elim;
    qpg_int *nextcol = w->nextcol;
    qpg_int n_pos = 0;
    qpg_int i, k, p, q;

    for (i = 0; i < n; i++) {
        nextcol[i] = Lp[i];
        ymark[i] = 0;
        yvals[i] = (qpg_float)0.0;
    }

    if (Ap[1] == 0 || Ai[Ap[1] - 1] != 0) {
        return -1;
    }
    D[0] = Ax[Ap[1] - 1];
    if (D[0] == (qpg_float)0.0) {
        return -1;
    }
    if (D[0] > (qpg_float)0.0) {
        n_pos++;
    }
    Dinv[0] = (qpg_float)1.0 / D[0];

    for (k = 1; k < n; k++) {
        const qpg_int col_start = Ap[k];
        const qpg_int col_end = Ap[k + 1] - 1;
        qpg_int nnz_y = 0;
        if (col_end < col_start || Ai[col_end] != k) {
            return -1;
        }
        D[k] = Ax[col_end];
        for (p = col_start; p < col_end; p++) {
            yvals[Ai[p]] = Ax[p];
        }

        for (p = col_start; p < col_end; p++) {
            qpg_int b_idx = Ai[p];
            if (ymark[b_idx] == 0) {
                qpg_int nnz_e = 1;
                qpg_int next_idx = parent[b_idx];
                ymark[b_idx] = 1;
                elim[0] = b_idx;
                while (next_idx != -1 && next_idx < k) {
                    if (ymark[next_idx] == 1) {
                        break;
                    }
                    ymark[next_idx] = 1;
                    elim[nnz_e] = next_idx;
                    nnz_e++;
                    next_idx = parent[next_idx];
                }
                for (q = nnz_e - 1; q >= 0; q--) {
                    yidx[nnz_y] = elim[q];
                    nnz_y++;
                }
            }
        }

        for (q = nnz_y - 1; q >= 0; q--) {
            const qpg_int c = yidx[q];
            const qpg_int tmp = nextcol[c];
            const qpg_float yc = yvals[c];
            for (p = Lp[c]; p < tmp; p++) {
                yvals[Li[p]] -= Lx[p] * yc;
            }
            Li[tmp] = k;
            Lx[tmp] = yc * Dinv[c];
            D[k] -= yc * Lx[tmp];
            nextcol[c] = tmp + 1;
            yvals[c] = (qpg_float)0.0;
            ymark[c] = 0;
        }

        if (D[k] == (qpg_float)0.0) {
            return -1;
        }
        if (D[k] > (qpg_float)0.0) {
            n_pos++;
        }
        Dinv[k] = (qpg_float)1.0 / D[k];
    }
    return n_pos;
}

/* x <- (L D L^T)^{-1} x in permuted coordinates; division-free. */
static void qpg_ldl_solve_inplace(const qpg_workspace *w, qpg_float *x)
{
    const qpg_int n = w->nk;
    const qpg_int *Lp = w->Lp;
    const qpg_int *Li = w->Li;
    const qpg_float *Lx = w->Lx;
    const qpg_float *Dinv = w->Dinv;
    qpg_int j, p;

    for (j = 0; j < n; j++) {
        const qpg_float xj = x[j];
        if (xj != (qpg_float)0.0) {
            for (p = Lp[j]; p < Lp[j + 1]; p++) {
                x[Li[p]] -= Lx[p] * xj;
            }
        }
    }
    for (j = 0; j < n; j++) {
        x[j] *= Dinv[j];
    }
    for (j = n - 1; j >= 0; j--) {
        qpg_float acc = x[j];
        for (p = Lp[j]; p < Lp[j + 1]; p++) {
            acc -= Lx[p] * x[Li[p]];
        }
        x[j] = acc;
    }
}

int qpg_admm(qpg_workspace *w, const qpg_settings *s)
{
    const qpg_int n = w->n;
    const qpg_int m = w->m;
    const qpg_int nk = w->nk;
    const qpg_float rho = s->rho;
    const qpg_float rho_inv = s->rho_inv;
    const qpg_float sigma = s->sigma;
    const qpg_float alpha = s->alpha;
    const qpg_float *q = w->q;
    const qpg_float *l = w->l;
    const qpg_float *u = w->u;
    qpg_float *x = w->x;
    qpg_float *y = w->y;
    qpg_float *z = w->z;
    qpg_float *rhs = w->rhs;
    qpg_float *work = w->work;
    qpg_float *ax = w->ax;
    qpg_float *px = w->px;
    qpg_float *aty = w->aty;
    qpg_float norm_q = (qpg_float)0.0;
    qpg_float pri = QPG_INF;
    qpg_float dua = QPG_INF;
    qpg_float dx_norm = (qpg_float)0.0;
    qpg_float dy_norm = (qpg_float)0.0;
    int status = QPG_MAX_ITER;
    qpg_int iters = s->max_iter;
    qpg_int it, i, j, k;

    for (i = 0; i < n; i++) {
        norm_q = qpg_max(norm_q, qpg_abs(q[i]));
    }

    for (it = 1; it <= s->max_iter; it++) {
        const int check = (it % s->check_interval == 0) || (it == s->max_iter);

        for (i = 0; i < m; i++) {
            rhs[n + i] = z[i] - rho_inv * y[i];
        }
        for (i = 0; i < n; i++) {
            rhs[i] = sigma * x[i] - q[i];
        }
        for (k = 0; k < nk; k++) {
            work[k] = rhs[w->perm[k]];
        }
        qpg_ldl_solve_inplace(w, work);
        for (k = 0; k < nk; k++) {
            rhs[w->perm[k]] = work[k];
        }

        if (check) {
            dx_norm = (qpg_float)0.0;
            dy_norm = (qpg_float)0.0;
        }
        for (i = 0; i < n; i++) {
            const qpg_float x_new = alpha * rhs[i] + ((qpg_float)1.0 - alpha) * x[i];
            if (check) {
                const qpg_float d = x_new - x[i];
                px[i] = d;                     /* px doubles as delta-x */
                dx_norm = qpg_max(dx_norm, qpg_abs(d));
            }
            x[i] = x_new;
        }
        for (i = 0; i < m; i++) {
            const qpg_float z_tilde = z[i] + rho_inv * (rhs[n + i] - y[i]);
            const qpg_float z_relax = alpha * z_tilde + ((qpg_float)1.0 - alpha) * z[i];
            qpg_float z_new = z_relax + rho_inv * y[i];
            qpg_float y_new;
            if (z_new < l[i]) {
                z_new = l[i];
            } else if (z_new > u[i]) {
                z_new = u[i];
            }
            y_new = y[i] + rho * (z_relax - z_new);
            if (check) {
                const qpg_float d = y_new - y[i];
                ax[i] = d;                     /* ax doubles as delta-y */
                dy_norm = qpg_max(dy_norm, qpg_abs(d));
            }
            y[i] = y_new;
            z[i] = z_new;
        }

        if (!check) {
            continue;
        }

        /* primal infeasibility: delta-y supports an empty polyhedron and
         * lies near the null space of A'.  Comparisons are scaled by the
         * delta norm instead of normalizing, which keeps this division-free
         * and is exact (the norm is positive). */
        if (dy_norm > (qpg_float)1e-30) {
            qpg_float lhs = (qpg_float)0.0;
            int feasible_dir = 1;
            for (i = 0; i < m; i++) {
                const qpg_float d = ax[i];
                if (d > (qpg_float)0.0) {
                    if (u[i] >= QPG_INF) {
                        feasible_dir = 0;
                        break;
                    }
                    lhs += u[i] * d;
                } else if (d < (qpg_float)0.0) {
                    if (l[i] <= -QPG_INF) {
                        feasible_dir = 0;
                        break;
                    }
                    lhs += l[i] * d;
                }
            }
            if (feasible_dir && lhs <= -s->eps_pinf * dy_norm) {
                int ok = 1;
                for (j = 0; j < n; j++) {
                    qpg_float acc = (qpg_float)0.0;
                    for (k = w->Ap[j]; k < w->Ap[j + 1]; k++) {
                        acc += w->Ax[k] * ax[w->Ai[k]];
                    }
                    if (qpg_abs(acc) > s->eps_pinf * dy_norm) {
                        ok = 0;
                        break;
                    }
                }
                if (ok) {
                    status = QPG_PRIMAL_INFEASIBLE;
                    iters = it;
                    break;
                }
            }
        }

        /* dual infeasibility: normalized delta-x is a strict descent ray */
        if (dx_norm > (qpg_float)1e-30) {
            qpg_float qdx = (qpg_float)0.0;
            for (i = 0; i < n; i++) {
                qdx += q[i] * px[i];
            }
            if (qdx <= -s->eps_dinf * dx_norm) {
                int ok = 1;
                for (i = 0; i < n; i++) {
                    aty[i] = (qpg_float)0.0;   /* aty doubles as P*dx */
                }
                for (j = 0; j < n; j++) {
                    const qpg_float vj = px[j];
                    for (k = w->Pp[j]; k < w->Pp[j + 1]; k++) {
                        const qpg_int r = w->Pi[k];
                        aty[r] += w->Px[k] * vj;
                        if (r < j) {
                            aty[j] += w->Px[k] * px[r];
                        }
                    }
                }
                for (i = 0; i < n; i++) {
                    if (qpg_abs(aty[i]) > s->eps_dinf * dx_norm) {
                        ok = 0;
                        break;
                    }
                }
                if (ok) {
                    for (i = 0; i < m; i++) {
                        rhs[n + i] = (qpg_float)0.0;   /* A*dx accumulates */
                    }
                    for (j = 0; j < n; j++) {
                        const qpg_float vj = px[j];
                        for (k = w->Ap[j]; k < w->Ap[j + 1]; k++) {
                            rhs[n + w->Ai[k]] += w->Ax[k] * vj;
                        }
                    }
                    for (i = 0; i < m; i++) {
                        const qpg_float adx = rhs[n + i];
                        if (u[i] >= QPG_INF) {
                            if (adx < -s->eps_dinf * dx_norm) {
                                ok = 0;
                                break;
                            }
                        } else if (l[i] <= -QPG_INF) {
                            if (adx > s->eps_dinf * dx_norm) {
                                ok = 0;
                                break;
                            }
                        } else if (qpg_abs(adx) > s->eps_dinf * dx_norm) {
                            ok = 0;
                            break;
                        }
                    }
                    if (ok) {
                        status = QPG_DUAL_INFEASIBLE;
                        iters = it;
                        break;
                    }
                }
            }
        }

        /* optimality: residuals of the current iterate */
        {
            qpg_float norm_ax = (qpg_float)0.0;
            qpg_float norm_z = (qpg_float)0.0;
            qpg_float norm_px = (qpg_float)0.0;
            qpg_float norm_aty = (qpg_float)0.0;
            qpg_float eps_pri, eps_dua;

            for (i = 0; i < m; i++) {
                ax[i] = (qpg_float)0.0;
            }
            for (j = 0; j < n; j++) {
                const qpg_float vj = x[j];
                for (k = w->Ap[j]; k < w->Ap[j + 1]; k++) {
                    ax[w->Ai[k]] += w->Ax[k] * vj;
                }
            }
            for (i = 0; i < n; i++) {
                px[i] = (qpg_float)0.0;
            }
            for (j = 0; j < n; j++) {
                const qpg_float vj = x[j];
                for (k = w->Pp[j]; k < w->Pp[j + 1]; k++) {
                    const qpg_int r = w->Pi[k];
                    px[r] += w->Px[k] * vj;
                    if (r < j) {
                        px[j] += w->Px[k] * x[r];
                    }
                }
            }
            for (j = 0; j < n; j++) {
                qpg_float acc = (qpg_float)0.0;
                for (k = w->Ap[j]; k < w->Ap[j + 1]; k++) {
                    acc += w->Ax[k] * y[w->Ai[k]];
                }
                aty[j] = acc;
            }

            pri = (qpg_float)0.0;
            for (i = 0; i < m; i++) {
                pri = qpg_max(pri, qpg_abs(ax[i] - z[i]));
                norm_ax = qpg_max(norm_ax, qpg_abs(ax[i]));
                norm_z = qpg_max(norm_z, qpg_abs(z[i]));
            }
            dua = (qpg_float)0.0;
            for (i = 0; i < n; i++) {
                dua = qpg_max(dua, qpg_abs(px[i] + q[i] + aty[i]));
                norm_px = qpg_max(norm_px, qpg_abs(px[i]));
                norm_aty = qpg_max(norm_aty, qpg_abs(aty[i]));
            }
            eps_pri = s->eps_abs + s->eps_rel * qpg_max(norm_ax, norm_z);
            eps_dua = s->eps_abs + s->eps_rel * qpg_max(norm_px, qpg_max(norm_aty, norm_q));
            if (pri <= eps_pri && dua <= eps_dua) {
                status = QPG_SOLVED;
                iters = it;
                break;
            }
        }
    }

    w->iterations = iters;
    w->pri_res = pri;
    w->dua_res = dua;
    return status;
}
