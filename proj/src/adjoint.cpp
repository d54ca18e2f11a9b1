#include "troughcal/adjoint.hpp"

#include "troughcal/error.hpp"

#include <algorithm>

namespace troughcal {

namespace {

void check_problem(const LoopProblem& p)
{
    if (p.model == nullptr) {
        throw Error(ErrorKind::ConfigError, "loop problem without model");
    }
    const std::size_t n = p.model->n_segments;
    const std::size_t m = p.model->sensor_cells.size();
    if (p.initial.size() != n || p.h_pg.size() != n) {
        throw Error(ErrorKind::LengthMismatch, "loop problem state or h_pg length");
    }
    if (p.weights.size() != m || p.measured.size() != (p.drives.size() + 1) * m) {
        throw Error(ErrorKind::LengthMismatch, "loop problem measurement shape");
    }
}

double residual_sum(const LoopProblem& p, const ThermalState& s, std::size_t n)
{
    const auto& cells = p.model->sensor_cells;
    const std::size_t m = cells.size();
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double r = s.fluid[cells[k]] - p.measured[n * m + k];
        acc += p.weights[k] * r * r;
    }
    return acc;
}

void add_residual_gradient(const LoopProblem& p, const ThermalState& s, std::size_t n,
                           std::span<double> lambda_fluid)
{
    const auto& cells = p.model->sensor_cells;
    const std::size_t m = cells.size();
    for (std::size_t k = 0; k < m; ++k) {
        const double r = s.fluid[cells[k]] - p.measured[n * m + k];
        lambda_fluid[cells[k]] += 2.0 * p.weights[k] * r;
    }
}

void checked_step(const LoopProblem& p, std::size_t n, const ThermalState& cur, ThermalState& next)
{
    try {
        step(cur, p.drives[n], p.h_pg, *p.model, next);
    } catch (const Error& e) {
        throw Error(e.kind(), e.message(), n);
    }
}

// Calls hook(n, state) for every state index 0..drives.size() and returns the
// objective. Shared by loop_objective and the adjoint forward sweep so both
// accumulate in the same order.
template <class Hook>
double run_forward(const LoopProblem& p, Hook&& hook)
{
    ThermalState cur = p.initial;
    ThermalState next(cur.size());
    double objective = 0.0;
    hook(std::size_t{0}, cur);
    for (std::size_t n = 0; n < p.drives.size(); ++n) {
        checked_step(p, n, cur, next);
        std::swap(cur, next);
        objective += residual_sum(p, cur, n + 1);
        hook(n + 1, cur);
    }
    return objective;
}

double pow3(double t) noexcept
{
    return t * t * t;
}

} // namespace

double loop_objective(const LoopProblem& problem)
{
    check_problem(problem);
    return run_forward(problem, [](std::size_t, const ThermalState&) {});
}

void step_adjoint(const ThermalState& state, const BoundaryDrive& drive,
                  std::span<const double> h_pg, const LoopModel& model,
                  std::span<const double> next_fluid, std::span<const double> next_pipe,
                  std::span<const double> next_glass, std::span<double> fluid,
                  std::span<double> pipe, std::span<double> glass, double& d_velocity,
                  std::span<double> d_h_pg)
{
    const auto& g = model.geometry;
    const auto& props = *model.fluid;
    const std::size_t n = state.size();

    const double rho_header = props.density(drive.header_k).value;
    const double unit_advect = rho_header * model.dt / model.dx;
    const double exchange = model.dt * g.h_fluid_pipe * g.pipe_perimeter / g.fluid_area;
    const double gamma_p = model.dt / (g.pipe_heat_capacity * g.pipe_area);
    const double gamma_g = model.dt / (g.glass_heat_capacity * g.glass_area);
    const double conduction = g.pipe_conductivity * g.pipe_area / (model.dx * model.dx);
    const double rad_p = g.pipe_emissivity * kStefanBoltzmann * g.pipe_perimeter;
    const double rad_g = g.glass_emissivity * kStefanBoltzmann * g.glass_perimeter;
    const double fp = g.h_fluid_pipe * g.pipe_perimeter;

    // Courant numbers are needed one cell ahead for the upstream coupling.
    double courant_next = 0.0;
    if (n > 0) {
        courant_next = drive.velocity * unit_advect / props.density(state.fluid[0]).value;
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double tf = state.fluid[j];
        const double tp = state.pipe[j];
        const double tg = state.glass[j];
        const double upstream = j == 0 ? drive.inlet_k : state.fluid[j - 1];

        const PropertyValue rho = props.density(tf);
        const PropertyValue cv = props.heat_capacity(tf);
        const double c0 = unit_advect / rho.value;
        const double courant = courant_next;
        if (j + 1 < n) {
            courant_next = drive.velocity * unit_advect / props.density(state.fluid[j + 1]).value;
        }
        const double kf = exchange / cv.value;
        const double dcourant = -courant * rho.derivative / rho.value;
        const double dkf = -kf * cv.derivative / cv.value;
        const double dff = 1.0 - courant - kf - (tf - upstream) * dcourant + (tp - tf) * dkf;

        const double lf = next_fluid[j];
        const double lp = next_pipe[j];
        const double lg = next_glass[j];

        double af = lf * dff + lp * gamma_p * fp;
        if (j + 1 < n) {
            af += next_fluid[j + 1] * courant_next;
        }
        fluid[j] = af;

        // Mirrored Laplacian is symmetric, so its transpose reuses the stencil.
        const double mu = lp;
        const double mu_left = j == 0 ? mu : next_pipe[j - 1];
        const double mu_right = j + 1 == n ? mu : next_pipe[j + 1];
        const double h = h_pg[j];
        pipe[j] = lf * kf +
                  lp * (1.0 + gamma_p * (-fp - h * g.pipe_perimeter - 4.0 * rad_p * pow3(tp))) +
                  gamma_p * conduction * (mu_right - 2.0 * mu + mu_left) +
                  lg * gamma_g * h * g.pipe_perimeter;

        glass[j] = lp * gamma_p * (h * g.pipe_perimeter + 4.0 * rad_p * pow3(tg)) +
                   lg * (1.0 + gamma_g * (-h * g.pipe_perimeter - g.h_glass_ambient * g.glass_perimeter -
                                          4.0 * rad_g * pow3(tg)));

        d_velocity += -lf * c0 * (tf - upstream);
        d_h_pg[j] += (lp * gamma_p - lg * gamma_g) * g.pipe_perimeter * (tg - tp);
    }
}

LoopAdjoint loop_adjoint(const LoopProblem& problem, std::size_t checkpoint_interval)
{
    check_problem(problem);
    const std::size_t interval = std::max<std::size_t>(1, checkpoint_interval);
    const std::size_t n_steps = problem.drives.size();
    const std::size_t n = problem.model->n_segments;

    std::vector<ThermalState> checkpoints;
    checkpoints.reserve(n_steps / interval + 1);
    ThermalState last;
    LoopAdjoint out;
    out.objective = run_forward(problem, [&](std::size_t k, const ThermalState& s) {
        if (k % interval == 0 && k < n_steps) {
            checkpoints.push_back(s);
        }
        if (k == n_steps) {
            last = s;
        }
    });
    out.d_velocity.assign(n_steps, 0.0);
    out.d_h_pg.assign(n, 0.0);
    if (n_steps == 0) {
        return out;
    }

    std::vector<double> lf(n, 0.0), lp(n, 0.0), lg(n, 0.0);
    std::vector<double> pf(n), pp(n), pg(n);
    add_residual_gradient(problem, last, n_steps, lf);

    std::vector<ThermalState> block;
    block.reserve(interval);
    for (std::size_t b = checkpoints.size(); b-- > 0;) {
        const std::size_t begin = b * interval;
        const std::size_t end = std::min(n_steps, begin + interval);
        block.clear();
        block.push_back(checkpoints[b]);
        ThermalState next(n);
        for (std::size_t k = begin; k + 1 < end; ++k) {
            checked_step(problem, k, block.back(), next);
            block.push_back(next);
        }
        for (std::size_t k = end; k-- > begin;) {
            const ThermalState& s = block[k - begin];
            std::fill(pf.begin(), pf.end(), 0.0);
            std::fill(pp.begin(), pp.end(), 0.0);
            std::fill(pg.begin(), pg.end(), 0.0);
            double dv = 0.0;
            step_adjoint(s, problem.drives[k], problem.h_pg, *problem.model, lf, lp, lg, pf, pp, pg,
                         dv, out.d_h_pg);
            out.d_velocity[k] = dv;
            if (k >= 1) {
                add_residual_gradient(problem, s, k, pf);
            }
            std::swap(lf, pf);
            std::swap(lp, pp);
            std::swap(lg, pg);
        }
    }
    return out;
}

} // namespace troughcal
