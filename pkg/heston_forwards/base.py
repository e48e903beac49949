import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import jinja2

from .errors import ConfigurationError
from .greeks import GreekEstimate, GreekRequest, check_eligibility
from .pricing import OptionSpec
from .simulate import ModelSpec

logger = logging.getLogger(__name__)


class ReportRenderer:
    """Text report renderer using Jinja2."""

    def __init__(self, template_dir: Optional[Path] = None):
        """Initialize the renderer with a Jinja2 environment.

        Args:
            template_dir: Path to template directory. If None, uses the default path.
        """
        if template_dir and isinstance(template_dir, str):
            template_dir = Path(template_dir)

        if template_dir is None:
            # First try ./templates/reports relative to the working directory
            default_template_dir = Path.cwd() / "templates" / "reports"

            if default_template_dir.is_dir():
                template_dir = default_template_dir
            else:
                template_dir = Path(__file__).parent / "templates"
                logger.debug(f"No report template directory at {default_template_dir}, using {template_dir}")

        if not template_dir.is_dir():
            logger.warning(f"Report template directory {template_dir} not found, using packaged templates")
            template_dir = Path(__file__).parent / "templates"

        self.template_dir = template_dir
        self.env = jinja2.Environment(
            loader=jinja2.FileSystemLoader(template_dir),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["num"] = lambda value, digits=6: f"{value:.{digits}g}"

    def render_template(self, template_name: str, template_data: Dict[str, Any]) -> str:
        """Render a report template.

        Args:
            template_name: Name of the template file without extension
            template_data: Dictionary of data to render the template with

        Returns:
            Rendered text

        Raises:
            ConfigurationError: If the template is missing or fails to render
        """
        try:
            template = self.env.get_template(f"{template_name}.txt")
            return template.render(**template_data)
        except jinja2.exceptions.TemplateNotFound:
            template_path = self.template_dir / f"{template_name}.txt"
            raise ConfigurationError(f"Report template '{template_name}' not found at {template_path}")
        except jinja2.exceptions.TemplateError as e:
            logger.error(f"Error rendering report template '{template_name}': {str(e)}")
            raise ConfigurationError(f"Failed to render report template: {str(e)}")

    @classmethod
    def from_config(cls, config) -> "ReportRenderer":
        """Create a renderer from the run block of a scenario.

        Args:
            config: Run block (or any object with ``RUN_TEMPLATE_DIR``)

        Returns:
            ReportRenderer instance
        """
        template_dir = getattr(config, "RUN_TEMPLATE_DIR", None)

        if template_dir and not os.path.isabs(template_dir):
            template_dir = Path.cwd() / template_dir
            logger.info(f"Converting relative template path to absolute: {template_dir}")

        return cls(template_dir=template_dir)


class BaseGreekEstimator:
    """Base class for the Greek estimators."""

    name = "base"

    # Estimators whose output has a random part even along a zero direction set this to False
    skips_zero_direction = True

    def estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        """Estimate the directional derivative of Π₀ described by ``req``.

        A zero direction returns 0 with standard error 0 without simulating,
        unless the estimator sets ``skips_zero_direction`` to False.

        Raises:
            EligibilityError: if the payoff is not differentiable and the estimator needs Φ'
        """
        check_eligibility(opt, self.name)
        if self.skips_zero_direction and req.as_direction().magnitude == 0.0:
            logger.info(f"Zero {req.parameter} direction, skipping the {self.name} simulation")
            return GreekEstimate(self.name, req.parameter, 0.0, 0.0, req.n_paths,
                                 direction_id=req.direction_id, seed=req.seed)
        logger.info(f"Running {self.name} estimator for {req.parameter} over {req.n_paths} paths")
        return self._estimate(spec, opt, req)

    def _estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        raise NotImplementedError("Subclasses must implement _estimate()")

    @classmethod
    def from_config(cls, config) -> "BaseGreekEstimator":
        """Create an instance from the greek block of a scenario.

        Raises:
            NotImplementedError: This method must be implemented by subclasses
        """
        raise NotImplementedError("Subclasses must implement from_config()")
