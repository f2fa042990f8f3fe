import os
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="GAZEID_",
        env_file=os.getenv("GAZEID_ENV_FILE"),  # None = solo variabili d'ambiente
        extra="ignore",
    )

    env: str = os.getenv("ENV", "unit-test")
    output_dir: str = "./out"
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"
    # seed usati durante l'ottimizzazione dei pesi; il report finale usa tutti i seed
    tuning_seeds: int = Field(default=5, ge=1)
    # quota finale dei segmenti di ogni registrazione di training tenuta da parte per la validazione
    validation_fraction: float = Field(default=0.25, gt=0, lt=1)
    model_format_version: int = 1


settings = Settings()
