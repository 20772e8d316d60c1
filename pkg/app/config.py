from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_DATEFMT: str = "%Y-%m-%d %H:%M:%S"

    # Files every subcommand writes under --out
    RUN_LOG_NAME: str = "run.log"
    RESOLVED_CONFIG_NAME: str = "resolved-config.json"

    # Guard against runaway tiling (pixels per side)
    MAX_IMAGE_SIDE: int = 8192

    CHECKPOINT_FORMAT_VERSION: int = 1

    class Config:
        env_file = ".env"
        env_prefix = "TOPOGAN_"
        case_sensitive = False


settings = Settings()
