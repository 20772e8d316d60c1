import logging
import sys
from typing import Optional

from app.api.routing import CommandApp
from app.errors import PipelineError

# Import routers
from app.api.synth.router import router as synth_router
from app.api.train.router import router as train_router
from app.api.generate.router import router as generate_router
from app.api.analyze.router import router as analyze_router
from app.api.eval.router import router as eval_router
from app.api.augment.router import router as augment_router
from app.api.bench.router import router as bench_router

logger = logging.getLogger(__name__)

app = CommandApp(
    prog="topogan",
    description="Structure-aware conditional GAN for periodic binary unit-cell designs",
)

# Include routers
app.include_router(synth_router)
app.include_router(train_router)
app.include_router(generate_router)
app.include_router(analyze_router)
app.include_router(eval_router)
app.include_router(augment_router)
app.include_router(bench_router)


def run(argv: Optional[list[str]] = None) -> int:
    """
    Run one subcommand and map failures to exit codes

    Returns:
        int: 0 on success, 2 for configuration or contract errors, 3 for numerical failures,
        1 for anything unexpected
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        response = app.dispatch(argv)
    except PipelineError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return 1
    print(response.model_dump_json())
    return 0


if __name__ == "__main__":
    sys.exit(run())
