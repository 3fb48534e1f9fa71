import sys
import argparse
import traceback
from pathlib import Path
from typing import List, Optional, Dict

import numpy as np

from src.core.errors import CatSimError, DataFormatError
from src.core import calib, catanalysis, gaussmodel, tomo
from src.core.acquisim import AcquisitionConfig, QuadratureDataset, sample_quadratures, heralded_source
from src.core.fockspace import DensityMatrix, squeezed_vacuum, wigner_grid
from src.utils import get_logger, get_config, get_file_service
from src.utils.config import ExperimentConfig, load_experiment_config
from src.utils.logging import Logger
from src.utils.workers import WorkerManager

# Configure application-wide logger
logger = get_logger()

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

TABLE_HEADER = ('P', 'F_odd', 'alpha', 'w00')
ANALYSIS_HEADER = ('P', 'F_odd', 'alpha', 'w00', 'xi_fit')
# Which prediction view a report of each source is compared against
SOURCE_VIEWS = {
    'predicted': gaussmodel.CorrectionView.UNCORRECTED,
    'reconstructed': gaussmodel.CorrectionView.UNCORRECTED,
    'reconstructed_loss_corrected': gaussmodel.CorrectionView.HOMODYNE,
}


def _out_dir(args) -> Path:
    out = args.out or get_config().get('default_out_dir', 'out')
    return get_file_service().ensure_directory(out)


def _predict_view(exp: ExperimentConfig, powers: List[float], view, n_max: int,
                  workers: WorkerManager) -> List[gaussmodel.PredictionRecord]:
    def job(power):
        cfg = gaussmodel.PredictionConfig.from_experiment(exp, view=view)
        return gaussmodel.predict_state(power, cfg, n_max)
    return workers.map(job, powers, operation=f"prediction ({gaussmodel.CorrectionView(view).value})")


def cmd_predict(args, exp: ExperimentConfig) -> int:
    """Table-1 (uncorrected) and Table-2 (corrected) predictions for every pump power."""
    powers = [float(p) for p in exp.pump_powers_mw]
    if not powers:
        logger.error("No pump powers configured")
        return EXIT_USAGE
    n_max = args.nmax or exp.prediction_n_max
    workers = WorkerManager()
    views = list(dict.fromkeys([gaussmodel.CorrectionView.UNCORRECTED, gaussmodel.CorrectionView.HOMODYNE,
                                gaussmodel.CorrectionView(exp.alt_view)]))
    results: Dict[str, List[gaussmodel.PredictionRecord]] = {
        view.value: _predict_view(exp, powers, view, n_max, workers) for view in views}

    fs = get_file_service()
    out = _out_dir(args)
    fs.write_json(str(out / 'predictions.json'), {
        'config': exp.to_dict(),
        'n_max': n_max,
        'views': {name: [r.to_dict() for r in records] for name, records in results.items()},
    })
    fs.write_csv(str(out / 'table1.csv'), TABLE_HEADER,
                 [r.table_row() for r in results['uncorrected']])
    rows = []
    for view in views[1:]:
        rows += [r.table_row() + [view.value] for r in results[view.value]]
    fs.write_csv(str(out / 'table2.csv'), TABLE_HEADER + ('view',), rows)
    for r in results['uncorrected']:
        logger.info(f"{r.power_mw:4.1f} mW: F={r.fidelity:.3f} alpha={r.alpha:.3f} W(0,0)={r.w00:+.4f}")
    return EXIT_OK


def cmd_simulate(args, exp: ExperimentConfig) -> int:
    """Synthetic quadrature dataset for the squeezing or subtraction experiment."""
    power = float(args.power)
    r = exp.gain_c * np.sqrt(power)
    seed = exp.seed
    if args.kind == 'squeezing':
        eta = exp.eta_alt if args.eta is None else args.eta
        state = squeezed_vacuum(r).density()
        signal, background = state, state
        cfg = AcquisitionConfig(n_segments=args.segments or exp.n_segments_squeezing,
                                phase_span=exp.phase_span, bin_size=exp.bin_size, seed=seed,
                                eta_hd=eta, xi=1.0)
    else:
        eta = exp.eta_hd if args.eta is None else args.eta
        xi = exp.xi_for(power) if args.xi is None else args.xi
        input_efficiency = gaussmodel.PredictionConfig.from_experiment(exp).input_efficiency
        signal, background = heralded_source(r, exp.tap_R, n_max=args.nmax,
                                             input_efficiency=input_efficiency)
        cfg = AcquisitionConfig(n_segments=args.segments or exp.n_segments,
                                phase_span=exp.phase_span, bin_size=exp.bin_size, seed=seed,
                                eta_hd=eta, xi=xi, dark_rate_hz=exp.dark_rate_hz,
                                trigger_rate_hz=exp.trigger_rate_for(power))
    dataset = sample_quadratures(signal, background, cfg,
                                 description={'kind': args.kind, 'power_mw': power, 'r': float(r)})
    path = _out_dir(args) / f"{args.kind}_{power:g}mW.csv"
    dataset.save(str(path))
    return EXIT_OK


def _reconstruct(dataset: QuadratureDataset, eta: float, n_max: int, bin_size: int) -> tomo.ReconstructionResult:
    assignment = tomo.estimate_phases(dataset, bin_size=bin_size)
    povm = tomo.build_povm(assignment, n_max=n_max, eta=eta)
    return tomo.mle_reconstruct(dataset, assignment, povm)


def cmd_reconstruct(args, exp: ExperimentConfig) -> int:
    """Maximum-likelihood density matrix from a dataset CSV."""
    dataset = QuadratureDataset.load(args.dataset)
    eta = 1.0 if args.eta is None else args.eta
    result = _reconstruct(dataset, eta, args.nmax or exp.n_max, args.bin_size or exp.bin_size)
    fs = get_file_service()
    out = _out_dir(args)
    stem = Path(args.dataset).stem
    fs.write_json(str(out / f"{stem}_reconstruction.json"), result.to_report())
    w00 = catanalysis.wigner_origin(result.rho)
    logger.info(f"Reconstructed {stem}: W(0,0)={w00:+.4f}, converged={result.converged}")
    return EXIT_OK


def _load_rho(path: str) -> DensityMatrix:
    document = get_file_service().read_json(path)
    if isinstance(document, dict) and 'rho' in document:
        document = document['rho']
    if not isinstance(document, dict):
        raise DataFormatError(f"{path} does not contain a density matrix", operation="load density matrix")
    return DensityMatrix.from_dict(document)


def _write_wigner(rho: DensityMatrix, path: Path) -> Path:
    settings = get_config()
    extent = float(settings.get('wigner_extent', 6.0))
    step = float(settings.get('wigner_step', 0.05))
    axis = np.round(np.arange(-extent, extent + 0.5 * step, step), 10)
    grid = wigner_grid(rho, axis, axis)
    rows = ((float(x), float(p), float(grid[i, j]))
            for i, x in enumerate(axis) for j, p in enumerate(axis))
    return get_file_service().write_csv(str(path), ('x', 'p', 'w'), rows)


def cmd_analyze(args, exp: ExperimentConfig) -> int:
    """Figures of merit and a Wigner grid for a density matrix."""
    rho = _load_rho(args.rho)
    report = catanalysis.analyze_state(rho, args.power, source=args.source)
    if args.fit_xi:
        cfg = gaussmodel.PredictionConfig.from_experiment(exp, view=SOURCE_VIEWS[args.source],
                                                          power_mw=args.power)
        report.xi_fit = catanalysis.fit_xi(report, cfg)
    fs = get_file_service()
    out = _out_dir(args)
    stem = Path(args.rho).stem
    fs.write_json(str(out / f"{stem}_analysis.json"), report.to_dict())
    fs.write_csv(str(out / f"{stem}_analysis.csv"), ANALYSIS_HEADER, [report.table_row()])
    _write_wigner(rho, out / f"{stem}_wigner.csv")
    logger.info(f"F={report.fidelity:.4f} alpha={report.alpha:.3f} W(0,0)={report.w00:+.4f}")
    return EXIT_OK


def cmd_fit(args, exp: ExperimentConfig) -> int:
    """Calibration fit of a measurement CSV."""
    points = calib.load_points(args.kind, args.csv)
    report = calib.fit_curve(args.kind, points, initial=exp.fit_start)
    get_file_service().write_json(str(_out_dir(args) / f"fit_{args.kind}.json"), report.to_dict())
    return EXIT_OK


def cmd_wigner(args, exp: ExperimentConfig) -> int:
    """Wigner grid CSV of a density matrix."""
    rho = _load_rho(args.rho)
    _write_wigner(rho, _out_dir(args) / f"{Path(args.rho).stem}_wigner.csv")
    return EXIT_OK


def cmd_surface(args, exp: ExperimentConfig) -> int:
    """Fidelity between the subtracted squeezed state and odd cats over a (dB, α) grid."""
    dbs = [float(v) for v in args.db] if args.db else np.arange(0.0, 6.01, 0.25).tolist()
    alphas = [float(v) for v in args.alphas] if args.alphas else np.arange(0.1, 2.01, 0.05).tolist()
    surface = catanalysis.fidelity_surface(dbs, alphas, n_max=args.nmax)
    rows = ((db, a, float(surface[i, j])) for i, db in enumerate(dbs) for j, a in enumerate(alphas))
    get_file_service().write_csv(str(_out_dir(args) / 'fidelity_surface.csv'), ('squeezing_db', 'alpha', 'F'), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='CatSim - photon-subtracted squeezed state toolkit')
    parser.add_argument('-v', '--verbose', action='store_true', help='Enable verbose logging')
    parser.add_argument('--config', help='Experiment configuration JSON')
    parser.add_argument('--seed', type=int, help='Random seed')
    parser.add_argument('--out', help='Output directory')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('predict', help='Model predictions for every pump power')
    p.add_argument('--nmax', type=int, help='Fock truncation of predicted states')
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser('simulate', help='Synthesize a quadrature dataset')
    p.add_argument('kind', choices=['squeezing', 'subtraction'])
    p.add_argument('--power', type=float, default=8.0, help='Pump power (mW)')
    p.add_argument('--eta', type=float, help='Detection efficiency')
    p.add_argument('--xi', type=float, help='Modal purity')
    p.add_argument('--segments', type=int, help='Number of samples')
    p.add_argument('--nmax', type=int, help='Fock truncation of the source states')
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('reconstruct', help='Maximum-likelihood reconstruction of a dataset')
    p.add_argument('dataset')
    p.add_argument('--eta', type=float, help='Efficiency to correct for (1 = none)')
    p.add_argument('--nmax', type=int, help='Reconstruction truncation')
    p.add_argument('--bin-size', dest='bin_size', type=int, help='Samples per phase bin')
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser('analyze', help='Figures of merit of a density matrix')
    p.add_argument('rho')
    p.add_argument('--power', type=float, default=0.0, help='Pump power (mW) recorded in the report')
    p.add_argument('--source', default='reconstructed', choices=list(catanalysis.SOURCES))
    p.add_argument('--fit-xi', dest='fit_xi', action='store_true', help='Fit the modal purity')
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser('fit', help='Calibration curve fit')
    p.add_argument('kind', choices=sorted(calib.CSV_HEADERS))
    p.add_argument('csv')
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser('wigner', help='Wigner grid CSV of a density matrix')
    p.add_argument('rho')
    p.set_defaults(handler=cmd_wigner)

    p = sub.add_parser('surface', help='Fidelity surface over squeezing and cat amplitude')
    p.add_argument('--db', nargs='+', help='Squeezing levels (dB)')
    p.add_argument('--alphas', nargs='+', help='Cat amplitudes')
    p.add_argument('--nmax', type=int, help='Fock truncation')
    p.set_defaults(handler=cmd_surface)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    # Configured level first, the verbose flag wins
    Logger.get_instance().apply_setting(get_config().get('log_level', 'INFO'))
    if args.verbose:
        Logger.get_instance().set_level("DEBUG")
        logger.debug("Verbose mode enabled.")

    try:
        exp = load_experiment_config(args.config, seed=args.seed)
        return args.handler(args, exp)
    except CatSimError as e:
        logger.error(f"{args.command} failed: {e}")
        logger.debug(f"Error details: {e.to_dict()}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_DATA
    except Exception as e:
        logger.critical(f"Unexpected error in {args.command}: {e}")
        logger.debug(traceback.format_exc())
        return 1


if __name__ == "__main__":
    sys.exit(main())
