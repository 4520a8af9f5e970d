from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class VpoSettings(BaseSettings):
    """
    Process settings for the vpo command, loaded from a .env file or environment variables.
    """

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    log_level: Optional[str] = Field(None, alias="VPO_LOG")

    # Optional configuration file path
    config_path: Optional[str] = Field(None, alias="VPO_CONFIG_PATH")

    output_dir: str = Field("results", alias="VPO_OUTPUT_DIR")


# Create a single, reusable instance of the settings
settings = VpoSettings()  # type: ignore[call-arg]
