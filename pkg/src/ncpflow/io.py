"""CSV writers and the gnuplot script for a finished run.

All numbers are written with ``%.12e`` and LF line endings, so identical
runs give byte-identical files. ``OSError`` propagates with the offending
path in ``filename``.
"""

from __future__ import annotations

import os

FLOAT_FMT = "%.12e"
SNAPSHOT_HEADER = "x_m,s_l,s_g,p_l_Pa,p_g_Pa,chi_h_l,rho_h_total_kg_m3"
CONVERGENCE_HEADER = "step,time_years,iter,residual,active_cells"
EVENT_HEADER = "event,time_years"
STEPS_HEADER = (
    "step,t_start_years,t_end_years,iterations,final_residual,max_s_g,n_gas_cells,"
    "gas_right_index,gas_volume_m,max_p_l_Pa,max_grad_p_Pa_m,max_change,"
    "water_mass_kg_m2,hydrogen_mass_kg_m2,dissolved_hydrogen_kg_m2,"
    "hydrogen_in_kg_m2_s,hydrogen_out_kg_m2_s,min_comp,max_comp"
)
EVENT_ORDER = ("first_gas_appearance", "injection_end", "last_gas_disappearance", "stationarity")


def fmt(v):
    return FLOAT_FMT % v


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def snapshot_filename(index, snapshot):
    return f"snapshot_{index:02d}_{int(round(snapshot.time))}y.csv"


def write_snapshot_csv(snapshot, path):
    cols = (snapshot.x, snapshot.s_l, snapshot.s_g, snapshot.p_l, snapshot.p_g,
            snapshot.chi_h_l, snapshot.rho_h_total)
    lines = [SNAPSHOT_HEADER]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(len(snapshot.x))]
    _write_lines(path, lines)


def read_snapshot_csv(path):
    """Columns of a snapshot file as a dict of float lists keyed by header name."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return {name: [r[k] for r in rows] for k, name in enumerate(header)}


def convergence_rows(steps):
    """``(step, time_years, iter, residual, active_cells)`` tuples.

    Row ``k`` of a step holds the residual reached after its ``k``-th Newton
    iteration; a step accepted without iterating contributes one row with
    ``iter = 0``.
    """
    out = []
    for st in steps:
        rep = st.report
        hist, act = rep.residual_history, rep.active_set_history
        ks = range(1, rep.iterations + 1) if rep.iterations else (0,)
        out += [(st.step, st.t_end, k, hist[k], act[k]) for k in ks]
    return out


def write_convergence_log(steps, path):
    """Per-iteration log of the accepted steps (``StepRecord`` sequence)."""
    lines = [CONVERGENCE_HEADER]
    lines += [f"{s},{fmt(t)},{k},{fmt(r)},{a}" for s, t, k, r, a in convergence_rows(steps)]
    _write_lines(path, lines)


def write_event_log(events, path):
    """One row per event; the time field is empty when the event did not occur."""
    lines = [EVENT_HEADER]
    for name in EVENT_ORDER:
        t = events.get(name)
        lines.append(f"{name},{'' if t is None else fmt(t)}")
    _write_lines(path, lines)


def read_event_log(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            name, _, val = line.rstrip("\n").partition(",")
            out[name] = float(val) if val else None
    return out


def write_steps_csv(steps, path):
    lines = [STEPS_HEADER]
    for st in steps:
        rep = st.report
        vals = [
            str(st.step), fmt(st.t_start), fmt(st.t_end), str(rep.iterations),
            fmt(rep.residual_history[-1]), fmt(st.max_s_g), str(st.n_gas_cells),
            str(st.gas_right_index), fmt(st.gas_volume), fmt(st.max_p_l), fmt(st.max_grad_p),
            fmt(st.max_change), fmt(st.water_mass), fmt(st.hydrogen_mass),
            fmt(st.dissolved_hydrogen_mass), fmt(st.flux_in[1]), fmt(st.flux_out[1]),
            fmt(st.min_comp), fmt(st.max_comp),
        ]
        lines.append(",".join(vals))
    _write_lines(path, lines)


def _gp_quote(name):
    return "'" + name.replace("'", "''") + "'"


def emit_plot_script(run_result, out_dir, snapshot_files, steps_file="steps.csv",
                     name="plot.gp"):
    """Write a gnuplot script drawing the profile panels and the iteration chart.

    ``snapshot_files`` are names relative to ``out_dir``; every referenced
    file must already exist there. Returns the script path.
    """
    for f in [*snapshot_files, steps_file]:
        if not os.path.exists(os.path.join(out_dir, f)):
            raise FileNotFoundError(2, "plot script input missing", os.path.join(out_dir, f))
    times = [s.time for s in run_result.snapshots]
    panels = (
        (7, "hydrogen density (kg/m^3)"),
        (3, "gas saturation"),
        (4, "liquid pressure (Pa)"),
    )
    out = [
        "# profiles and Newton iterations of an ncpflow run",
        f"# run inside the output directory: gnuplot {name}",
        "set datafile separator ','",
        "set terminal pngcairo size 1500,450 font ',10'",
        "set output 'profiles_gnuplot.png'",
        "set multiplot layout 1,3",
        "set xlabel 'x (m)'",
        "set key outside right",
    ]
    for col, label in panels:
        curves = [
            f"{_gp_quote(f)} every ::1 using 1:{col} with lines title 't = {t:g} y'"
            for f, t in zip(snapshot_files, times)
        ]
        out.append(f"set ylabel '{label}'")
        out.append("plot " + (", \\\n     ".join(curves) if curves else "NaN notitle"))
    out += [
        "unset multiplot",
        "set terminal pngcairo size 800,450 font ',10'",
        "set output 'iterations_gnuplot.png'",
        "set xlabel 'time (years)'",
        "set ylabel 'Newton-min iterations'",
        "unset key",
        f"plot {_gp_quote(steps_file)} every ::1 using 3:4 with impulses lw 2",
        "unset output",
    ]
    path = os.path.join(out_dir, name)
    _write_lines(path, out)
    return path
